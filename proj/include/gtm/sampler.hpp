#ifndef GTM_SAMPLER_HPP
#define GTM_SAMPLER_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "gtm/model.hpp"

namespace gtm {

struct LatentDiagnostics {
  ad::Vector z_t, z_a, z_q;
  GaussianParams triple, answer_prior, question_prior;
  /// Softmax over the 9 question types.
  ad::Vector type_distribution;
};

struct GenerationResult {
  Tokens question;
  std::vector<int> question_ids;
  QuestionType predicted_type{QuestionType::what};
  LatentDiagnostics latents;
  std::uint64_t seed{0};
  int sample_index{0};
};

struct GenerateOptions {
  DecodeStrategy strategy{DecodeStrategy::sample};
  int n_samples{1};
  /// Post truncation and decoding limit.
  int max_len{30};
};

/// The only view of a GtmModel that generation sees: post encoding, the
/// post-only triple posterior, the priors and the question decoder. Nothing
/// here accepts question or answer text.
class InferenceView {
 public:
  explicit InferenceView(const GtmModel& model) : m_(&model) {}

  const Vocabulary& vocab() const { return m_->vocab(); }
  const ModelConfig& config() const { return m_->config(); }
  UtteranceEncoding encode_post(ad::Graph& g, const SequenceBatch& post) const { return m_->encode_utterance(g, post); }
  nn::GaussianVars triple_from_post(ad::Graph& g, ad::Var h_enc_p) const {
    const ad::Var seq[] = {h_enc_p};
    return m_->latent().posterior_triple(g, m_->encode_triple_sequence(g, seq));
  }
  ContextBridge context_bridge(ad::Graph& g, ad::Var z_t, ad::Var h_enc_p) const {
    return m_->latent().context_bridge(g, z_t, h_enc_p);
  }
  nn::GaussianVars prior_answer(ad::Graph& g, const ContextBridge& b, ad::Var z_t) const {
    return m_->latent().prior_answer(g, b, z_t);
  }
  nn::GaussianVars prior_question(ad::Graph& g, const ContextBridge& b, ad::Var z_t, ad::Var z_a) const {
    return m_->latent().prior_question(g, b, z_t, z_a);
  }
  ad::Var question_type_logits(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_enc_p) const {
    return m_->question_type_logits(g, z_q, z_t, h_enc_p);
  }
  ad::Var question_type_vectors(ad::Graph& g, std::span<const int> types) const {
    return m_->question_type_vectors(g, types);
  }
  ad::Var init_question_decoder(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_ctx_q, ad::Var v_qt) const {
    return m_->init_question_decoder(g, z_q, z_t, h_ctx_q, v_qt);
  }
  const Decoder& question_decoder() const { return m_->question_decoder(); }
  AttentionMemory post_memory(ad::Graph& g, const UtteranceEncoding& post) const {
    return m_->post_memory(g, post, m_->question_decoder());
  }

 private:
  const GtmModel* m_;
};

namespace detail {

inline ad::Vector col(const ad::Var& v, Eigen::Index c) { return v.value().col(c); }

}  // namespace detail

/// Inference from a post alone: (1) z^t from the triple recognition network
/// over the length-1 sequence [h_p], (2) z^a from its prior, (3) z^q from
/// its prior, (4) argmax question type, (5) question decoding. Greedy uses
/// latent means and argmax tokens; sample draws latents and tokens from rng
/// seeded with `seed`. Samples are decoded as columns of one batch.
template <class View>
std::vector<GenerationResult> generate_with(const View& view, std::span<const std::string> post, std::uint64_t seed,
                                            const GenerateOptions& opts) {
  if (post.empty()) throw std::invalid_argument("generate: empty post");
  if (opts.n_samples < 1) throw std::invalid_argument("generate: n_samples must be >= 1");
  if (opts.max_len < 2) throw std::invalid_argument("generate: max_len must be >= 2");
  if (view.config().vocab_size != static_cast<Eigen::Index>(view.vocab().size())) {
    throw std::invalid_argument("generate: model and vocabulary sizes differ");
  }
  const bool sample = opts.strategy == DecodeStrategy::sample;
  const auto n = static_cast<Eigen::Index>(opts.n_samples);
  const Eigen::Index dz = view.config().latent_dim;
  std::mt19937_64 rng(seed);
  auto noise = [&]() -> ad::Matrix { return sample ? standard_normal(dz, n, rng) : ad::Matrix::Zero(dz, n); };

  int len = 0;
  const std::vector<int> ids = encode_sentence(post, view.vocab(), opts.max_len, len);
  std::vector<const std::vector<int>*> rows(static_cast<std::size_t>(n), &ids);
  std::vector<int> lens(static_cast<std::size_t>(n), len);

  ad::Graph g;
  const UtteranceEncoding enc = view.encode_post(g, make_sequence_batch(rows, lens));
  const nn::GaussianVars q_t = view.triple_from_post(g, enc.summary);
  const ad::Var z_t = reparameterize(g, q_t, noise());
  const ContextBridge bridge = view.context_bridge(g, z_t, enc.summary);
  const nn::GaussianVars p_a = view.prior_answer(g, bridge, z_t);
  const ad::Var z_a = reparameterize(g, p_a, noise());
  const nn::GaussianVars p_q = view.prior_question(g, bridge, z_t, z_a);
  const ad::Var z_q = reparameterize(g, p_q, noise());

  const ad::Matrix type_probs = ad::softmax_cols(view.question_type_logits(g, z_q, z_t, enc.summary).value());
  std::vector<int> types(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index best = 0;
    type_probs.col(c).maxCoeff(&best);
    types[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  const ad::Var v_qt = view.question_type_vectors(g, types);
  const ad::Var s0 = view.init_question_decoder(g, z_q, z_t, bridge.h_ctx_q, v_qt);
  const auto decoded = view.question_decoder().decode(g, s0, view.post_memory(g, enc), opts.max_len, opts.strategy,
                                                      sample ? &rng : nullptr);

  std::vector<GenerationResult> out;
  for (Eigen::Index c = 0; c < n; ++c) {
    GenerationResult r;
    r.question_ids = decoded[static_cast<std::size_t>(c)];
    r.question = decode_ids(r.question_ids, view.vocab());
    r.predicted_type = static_cast<QuestionType>(types[static_cast<std::size_t>(c)]);
    r.latents.z_t = detail::col(z_t, c);
    r.latents.z_a = detail::col(z_a, c);
    r.latents.z_q = detail::col(z_q, c);
    r.latents.triple = column(q_t, c);
    r.latents.answer_prior = column(p_a, c);
    r.latents.question_prior = column(p_q, c);
    r.latents.type_distribution = type_probs.col(c);
    r.seed = seed;
    r.sample_index = static_cast<int>(c);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GenerationResult> generate(std::span<const std::string> post, const GtmModel& model, std::uint64_t seed,
                                       const GenerateOptions& opts);

/// Writes one JSON line per result, {post, question, predicted_type, seed},
/// plus `sample` when n_samples > 1. Post i uses seed + i.
void batch_generate(std::span<const Tokens> posts, const GtmModel& model, std::uint64_t seed,
                    const GenerateOptions& opts, std::ostream& out);
void batch_generate(std::span<const Tokens> posts, const GtmModel& model, std::uint64_t seed,
                    const GenerateOptions& opts, const std::filesystem::path& out_path);

/// Reads posts, one per line. A line that parses as a JSON object uses its
/// "post" field; anything else is taken as whitespace-tokenized text.
std::vector<Tokens> read_posts(const std::filesystem::path& path);

/// Training diagnostic, not inference: greedy question decode from the
/// full-triple posterior means with the gold question type.
struct Reconstruction {
  std::vector<int> question_ids;
  /// predict_question_type at the posterior means.
  ad::Vector type_distribution;
};
std::vector<Reconstruction> reconstruct_questions(const GtmModel& model, std::span<const EncodedTriple> data,
                                                  int max_len, int batch_size = 64);

}  // namespace gtm

#endif  // GTM_SAMPLER_HPP
