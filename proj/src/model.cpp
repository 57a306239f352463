#include "gtm/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "gtm/objective.hpp"

namespace gtm {

std::size_t DecoderTargets::num_targets() const {
  std::size_t n = 0;
  for (const auto& row : weights) {
    for (double w : row) n += w != 0.0 ? 1 : 0;
  }
  return n;
}

namespace {

DecoderTargets make_decoder_targets(const SequenceBatch& seq) {
  DecoderTargets d;
  const std::size_t batch = seq.batch();
  for (std::size_t t = 0; t < seq.steps(); ++t) {
    std::vector<int> in(batch), tgt(batch);
    std::vector<double> w(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const bool live = static_cast<int>(t) < seq.lengths[b];
      in[b] = t == 0 ? Vocabulary::kSos : seq.ids[t - 1][b];
      tgt[b] = live ? seq.ids[t][b] : Vocabulary::kPad;
      w[b] = live ? 1.0 : 0.0;
    }
    d.inputs.push_back(std::move(in));
    d.targets.push_back(std::move(tgt));
    d.weights.push_back(std::move(w));
  }
  return d;
}

}  // namespace

Batch make_batch(std::span<const EncodedTriple* const> examples) {
  if (examples.empty()) throw std::invalid_argument("make_batch: empty batch");
  std::vector<const std::vector<int>*> p, q, a;
  std::vector<int> lp, lq, la;
  Batch batch;
  for (const EncodedTriple* e : examples) {
    p.push_back(&e->post_ids);
    q.push_back(&e->question_ids);
    a.push_back(&e->answer_ids);
    lp.push_back(e->post_len);
    lq.push_back(e->question_len);
    la.push_back(e->answer_len);
    if (e->question_type_id < 0 || e->question_type_id >= kNumQuestionTypes) {
      throw std::invalid_argument("make_batch: question type id out of range");
    }
    batch.question_types.push_back(e->question_type_id);
  }
  batch.post = make_sequence_batch(p, lp);
  batch.question = make_sequence_batch(q, lq);
  batch.answer = make_sequence_batch(a, la);
  batch.question_dec = make_decoder_targets(batch.question);
  batch.answer_dec = make_decoder_targets(batch.answer);
  return batch;
}

Batch make_batch(std::span<const EncodedTriple> examples) {
  std::vector<const EncodedTriple*> ptrs;
  for (const EncodedTriple& e : examples) ptrs.push_back(&e);
  return make_batch(ptrs);
}

GtmModel::GtmModel(const ModelConfig& config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab)) {
  if (config_.vocab_size == 0) config_.vocab_size = static_cast<Eigen::Index>(vocab_.size());
  if (config_.vocab_size != static_cast<Eigen::Index>(vocab_.size())) {
    throw std::invalid_argument("model: vocab_size " + std::to_string(config_.vocab_size) +
                                " does not match vocabulary of " + std::to_string(vocab_.size()));
  }
  if (config_.embed_dim < 1 || config_.hidden < 1 || config_.latent_dim < 1 || config_.qt_dim < 1 ||
      config_.mlp_hidden < 1) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
  const ModelConfig& c = config_;
  using ad::ParamGroup;
  embedding_ = &store_.add("embedding", ParamGroup::embedding, c.embed_dim, c.vocab_size);
  qt_table_ = &store_.add("qt_embedding", ParamGroup::embedding, c.qt_dim, kNumQuestionTypes);
  utterance_ = UtteranceEncoder(store_, "encoder", *embedding_, c.hidden);
  const Eigen::Index utt = 2 * c.hidden;
  triple_ = TripleEncoder(store_, "recog.triple_rnn", utt, c.hidden);
  LatentDims dims;
  dims.utterance = utt;
  dims.triple = 2 * c.hidden;
  dims.latent = c.latent_dim;
  dims.qt = c.qt_dim;
  dims.mlp_hidden = c.mlp_hidden;
  dims.min_sigma = c.min_sigma;
  latent_ = LatentNetworks(store_, dims);
  const Eigen::Index one[] = {c.mlp_hidden};
  qt_predictor_ = nn::Mlp(store_, "qt_predictor", ParamGroup::generation, 2 * c.latent_dim + utt, one,
                          kNumQuestionTypes);
  question_decoder_ = Decoder(store_, "qdec", *embedding_, 2 * c.latent_dim + utt + c.qt_dim, utt, c.hidden,
                              c.vocab_size);
  answer_decoder_ = Decoder(store_, "adec", *embedding_, 2 * c.latent_dim + utt, utt, c.hidden, c.vocab_size);
  bow_.question = nn::Mlp(store_, "bow.question", ParamGroup::generation, c.latent_dim, one, c.vocab_size);
  bow_.answer = nn::Mlp(store_, "bow.answer", ParamGroup::generation, c.latent_dim, one, c.vocab_size);
  bow_.triple = nn::Mlp(store_, "bow.triple", ParamGroup::generation, c.latent_dim, one, c.vocab_size);
}

UtteranceEncoding GtmModel::encode_utterance(ad::Graph& g, const SequenceBatch& batch) const {
  return utterance_.encode(g, batch);
}

TripleEncoding GtmModel::encode_triple_sequence(ad::Graph& g, std::span<const ad::Var> summaries) const {
  return triple_.encode(g, summaries);
}

ad::Var GtmModel::question_type_vectors(ad::Graph& g, std::span<const int> types) const {
  return ad::lookup(g, *qt_table_, types);
}

ad::Var GtmModel::question_type_logits(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_enc_p) const {
  const ad::Var in[] = {z_q, z_t, h_enc_p};
  return qt_predictor_(g, ad::concat_rows(in));
}

ad::Var GtmModel::init_question_decoder(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_ctx_q,
                                        ad::Var v_qt) const {
  const ad::Var in[] = {z_q, z_t, h_ctx_q, v_qt};
  return question_decoder_.init_state(g, in);
}

ad::Var GtmModel::init_answer_decoder(ad::Graph& g, ad::Var z_a, ad::Var z_t, ad::Var h_ctx_a) const {
  const ad::Var in[] = {z_a, z_t, h_ctx_a};
  return answer_decoder_.init_state(g, in);
}

AttentionMemory GtmModel::post_memory(ad::Graph& g, const UtteranceEncoding& post, const Decoder& dec) const {
  return dec.attention().prepare(g, post.token_states, post.mask);
}

ad::Vector predict_question_type(const GtmModel& model, const ad::Vector& z_q, const ad::Vector& z_t,
                                 const ad::Vector& h_enc_p) {
  ad::Graph g;
  ad::Var logits = model.question_type_logits(g, g.constant(z_q), g.constant(z_t), g.constant(h_enc_p));
  return ad::softmax_cols(logits.value()).col(0);
}

namespace {

ad::Var teacher_forced_nll(ad::Graph& g, const Decoder& dec, ad::Var s0, const AttentionMemory& memory,
                           const DecoderTargets& targets, const ForwardOptions& opts, std::mt19937_64& rng,
                           std::vector<ad::Var>* logits_out) {
  std::vector<std::vector<int>> inputs = targets.inputs;
  if (opts.word_drop > 0.0) {
    for (auto& row : inputs) row = word_drop(row, opts.word_drop, rng);
  }
  StepRegularizer reg{opts.dropout, &rng};
  ad::Var s = s0;
  std::vector<ad::Var> losses;
  for (std::size_t t = 0; t < targets.steps(); ++t) {
    DecoderStep st = dec.step(g, dec.embed(g, inputs[t]), s, memory, reg);
    s = st.state;
    losses.push_back(ad::pick_neg_log_softmax(st.logits, targets.targets[t], targets.weights[t]));
    if (logits_out != nullptr) logits_out->push_back(st.logits);
  }
  return ad::add_n(losses);
}

}  // namespace

TrainingForward forward_training(ad::Graph& g, const GtmModel& model, const Batch& batch, const ForwardOptions& opts,
                                 std::mt19937_64& rng) {
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index dz = model.config().latent_dim;
  auto noise = [&]() -> ad::Matrix {
    return opts.sample_latents ? standard_normal(dz, B, rng) : ad::Matrix::Zero(dz, B);
  };

  TrainingForward f;
  f.batch_size = batch.size();
  f.question_words = batch.question_dec.num_targets();
  f.answer_words = batch.answer_dec.num_targets();

  UtteranceEncoding post = model.encode_utterance(g, batch.post);
  UtteranceEncoding question = model.encode_utterance(g, batch.question);
  UtteranceEncoding answer = model.encode_utterance(g, batch.answer);

  const ad::Var utterances[] = {post.summary, question.summary, answer.summary};
  TripleEncoding h_t = model.encode_triple_sequence(g, utterances);
  const LatentNetworks& lat = model.latent();

  f.post_triple = lat.posterior_triple(g, h_t);
  f.z_t = reparameterize(g, f.post_triple, noise());

  ContextBridge bridge = lat.context_bridge(g, f.z_t, post.summary);
  f.prior_answer = lat.prior_answer(g, bridge, f.z_t);
  f.post_answer = lat.posterior_answer(g, bridge, f.z_t, answer.summary);
  f.z_a = reparameterize(g, f.post_answer, noise());

  ad::Var v_qt = model.question_type_vectors(g, batch.question_types);
  f.prior_question = lat.prior_question(g, bridge, f.z_t, f.z_a);
  f.post_question = lat.posterior_question(g, bridge, f.z_t, question.summary, v_qt, f.z_a);
  f.z_q = reparameterize(g, f.post_question, noise());

  f.qt_logits = model.question_type_logits(g, f.z_q, f.z_t, post.summary);
  const std::vector<double> ones(batch.size(), 1.0);
  f.qt_ce = ad::pick_neg_log_softmax(f.qt_logits, batch.question_types, ones);

  const Decoder& qdec = model.question_decoder();
  const Decoder& adec = model.answer_decoder();
  ad::Var s0_q = model.init_question_decoder(g, f.z_q, f.z_t, bridge.h_ctx_q, v_qt);
  ad::Var s0_a = model.init_answer_decoder(g, f.z_a, f.z_t, bridge.h_ctx_a);
  f.rec_q = teacher_forced_nll(g, qdec, s0_q, model.post_memory(g, post, qdec), batch.question_dec, opts, rng,
                               &f.question_logits);
  f.rec_a = teacher_forced_nll(g, adec, s0_a, model.post_memory(g, post, adec), batch.answer_dec, opts, rng, nullptr);

  if (opts.use_bow) f.bow = bow_loss(g, model.bow(), f.z_t, f.z_q, f.z_a, batch.question, batch.answer);
  return f;
}

}  // namespace gtm
