#include "gtm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace gtm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nlohmann::ordered_json to_json(const LossBreakdown& l) {
  return {{"total", l.total}, {"rec_q", l.rec_q}, {"rec_a", l.rec_a}, {"qt_ce", l.qt_ce}, {"kl_t", l.kl_t},
          {"kl_a", l.kl_a},   {"kl_q", l.kl_q},   {"bow", l.bow},     {"lambda", l.lambda}};
}

nlohmann::ordered_json to_json(const TrainingLogRecord& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["train"] = to_json(r.train);
  j["kl_per_word"] = r.kl_per_word;
  if (r.valid) {
    nlohmann::ordered_json v = to_json(r.valid->loss);
    v["kl_per_word"] = r.valid->kl_per_word;
    v["question_token_accuracy"] = r.valid->question_token_accuracy;
    v["examples"] = r.valid->examples;
    j["valid"] = v;
  } else {
    j["valid"] = nullptr;
  }
  j["seconds"] = r.seconds;
  return j;
}

std::vector<EncodedTriple> encode_corpus(std::span<const Triple> corpus, const Vocabulary& vocab, int max_len) {
  std::vector<EncodedTriple> out;
  out.reserve(corpus.size());
  for (const Triple& t : corpus) out.push_back(encode_triple(t, vocab, max_len));
  return out;
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& l, double w) {
  acc.kl_t += w * l.kl_t;
  acc.kl_a += w * l.kl_a;
  acc.kl_q += w * l.kl_q;
  acc.rec_q += w * l.rec_q;
  acc.rec_a += w * l.rec_a;
  acc.qt_ce += w * l.qt_ce;
  acc.bow += w * l.bow;
  acc.total += w * l.total;
  acc.lambda += w * l.lambda;
}

std::vector<const EncodedTriple*> slice(std::span<const EncodedTriple> data, std::span<const std::size_t> order,
                                        std::size_t begin, std::size_t end) {
  std::vector<const EncodedTriple*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&data[order.empty() ? i : order[i]]);
  return out;
}

}  // namespace

EvalMetrics evaluate_teacher_forced(const GtmModel& model, std::span<const EncodedTriple> data, bool use_bow,
                                    int batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate_teacher_forced: empty corpus");
  if (batch_size < 1) throw std::invalid_argument("evaluate_teacher_forced: batch_size must be positive");
  EvalMetrics m;
  ForwardOptions opts;
  opts.sample_latents = false;
  opts.use_bow = use_bow;
  std::mt19937_64 unused(0);
  double kl_total = 0.0;
  std::size_t words = 0, correct = 0, targets = 0;
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < data.size(); begin += bs) {
    const std::size_t end = std::min(data.size(), begin + bs);
    const Batch batch = make_batch(slice(data, {}, begin, end));
    ad::Graph g;
    TrainingForward f = forward_training(g, model, batch, opts, unused);
    const LossGraph loss = elbo_loss(f, 1.0);
    const double n = static_cast<double>(batch.size());
    accumulate(m.loss, loss.values, n);
    kl_total += loss.values.kl_sum() * n;
    words += f.question_words + f.answer_words;
    for (std::size_t t = 0; t < f.question_logits.size(); ++t) {
      const ad::Matrix& logits = f.question_logits[t].value();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch.question_dec.weights[t][b] == 0.0) continue;
        Eigen::Index best = 0;
        logits.col(static_cast<Eigen::Index>(b)).maxCoeff(&best);
        correct += best == batch.question_dec.targets[t][b] ? 1 : 0;
        ++targets;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  LossBreakdown& l = m.loss;
  for (double* v : {&l.kl_t, &l.kl_a, &l.kl_q, &l.rec_q, &l.rec_a, &l.qt_ce, &l.bow, &l.total, &l.lambda}) *v *= inv;
  m.kl_per_word = words > 0 ? kl_total / static_cast<double>(words) : 0.0;
  m.question_token_accuracy = targets > 0 ? static_cast<double>(correct) / static_cast<double>(targets) : 0.0;
  m.examples = data.size();
  return m;
}

Trainer::Trainer(TrainConfig config, Vocabulary vocab) : config_(std::move(config)) {
  config_.validate();
  model_ = std::make_unique<GtmModel>(config_.model_config(vocab.size()), std::move(vocab));
  model_->params().initialize(config_.seed);
  adam_ = Adam(model_->params(), config_.learning_rate);
}

Trainer::Trainer(Checkpoint checkpoint)
    : config_(std::move(checkpoint.config)),
      model_(std::move(checkpoint.model)),
      step_(checkpoint.step),
      epoch_(checkpoint.epoch) {
  adam_ = checkpoint.optimizer ? std::move(*checkpoint.optimizer) : Adam(model_->params(), config_.learning_rate);
}

double Trainer::lambda_at(std::int64_t step, std::size_t train_size) const {
  if (!config_.use_anneal) return 1.0;
  std::int64_t total = config_.anneal_steps;
  if (total == 0) {
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    total = static_cast<std::int64_t>((train_size + bs - 1) / bs);
  }
  return kl_anneal(step, std::max<std::int64_t>(total, 1));
}

void Trainer::write_abort(const std::optional<std::filesystem::path>& out_dir, TrainingLogRecord record) {
  std::filesystem::path path;
  if (out_dir) {
    path = *out_dir / "abort_record.json";
    std::ofstream os(path);
    os << to_json(record).dump(2) << '\n';
  }
  throw TrainingAborted("non-finite loss at step " + std::to_string(record.step), std::move(record), path);
}

TrainingLogRecord Trainer::run_epoch(std::span<const EncodedTriple> train, std::span<const EncodedTriple> valid) {
  if (train.empty()) throw std::invalid_argument("train: empty training corpus");
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(config_.seed, static_cast<std::uint64_t>(epoch_)));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  ForwardOptions opts;
  opts.sample_latents = true;
  opts.word_drop = config_.word_drop;
  opts.dropout = config_.dropout;
  opts.use_bow = config_.use_bow;

  TrainingLogRecord rec;
  double kl_total = 0.0;
  std::size_t words = 0;
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += bs) {
    const std::size_t end = std::min(order.size(), begin + bs);
    const Batch batch = make_batch(slice(train, order, begin, end));
    const double lambda = lambda_at(step_, train.size());

    ad::Graph g;
    TrainingForward f = forward_training(g, *model_, batch, opts, rng);
    const LossGraph loss = elbo_loss(f, lambda);
    if (!std::isfinite(loss.values.total)) {
      TrainingLogRecord bad;
      bad.kind = "abort";
      bad.epoch = epoch_;
      bad.step = step_;
      bad.train = loss.values;
      const auto w = f.question_words + f.answer_words;
      bad.kl_per_word = w > 0 ? loss.values.kl_sum() * static_cast<double>(batch.size()) / static_cast<double>(w) : 0.0;
      write_abort(abort_dir_, std::move(bad));
    }
    model_->params().zero_grad();
    g.backward(loss.total);
    Adam::clip_global_norm(model_->params(), config_.clip_norm);
    adam_.step(model_->params());
    ++step_;

    const double n = static_cast<double>(batch.size());
    accumulate(rec.train, loss.values, n);
    kl_total += loss.values.kl_sum() * n;
    words += f.question_words + f.answer_words;
  }
  const double inv = 1.0 / static_cast<double>(train.size());
  LossBreakdown& l = rec.train;
  for (double* v : {&l.kl_t, &l.kl_a, &l.kl_q, &l.rec_q, &l.rec_a, &l.qt_ce, &l.bow, &l.total, &l.lambda}) *v *= inv;
  rec.kl_per_word = words > 0 ? kl_total / static_cast<double>(words) : 0.0;
  rec.epoch = epoch_;
  rec.step = step_;
  ++epoch_;
  if (!valid.empty()) rec.valid = evaluate_teacher_forced(*model_, valid, config_.use_bow, config_.batch_size);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<TrainingLogRecord> Trainer::fit(std::span<const EncodedTriple> train,
                                            std::span<const EncodedTriple> valid, const FitOptions& options) {
  std::vector<TrainingLogRecord> log;
  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train_log.jsonl", std::ios::app);
    if (!log_file) throw std::runtime_error("cannot write " + (*options.out_dir / "train_log.jsonl").string());
  }
  abort_dir_ = options.out_dir;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  while (epoch_ < config_.max_epochs) {
    TrainingLogRecord rec;
    try {
      rec = run_epoch(train, valid);
    } catch (const TrainingAborted& e) {
      if (log_file) log_file << to_json(e.record()).dump() << '\n';
      throw;
    }
    log.push_back(rec);
    if (log_file) log_file << to_json(rec).dump() << '\n' << std::flush;
    if (options.out_dir) save(*options.out_dir / "latest.ckpt");

    bool stop = false;
    if (rec.valid) {
      if (rec.valid->loss.total < best) {
        best = rec.valid->loss.total;
        stale = 0;
        if (options.out_dir) save(*options.out_dir / "best.ckpt");
      } else if (config_.patience > 0 && ++stale >= config_.patience) {
        stop = true;
      }
    }
    if (options.on_epoch && !options.on_epoch(rec)) stop = true;
    if (stop) break;
  }
  return log;
}

void Trainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, *model_, config_, step_, epoch_, &adam_);
}

}  // namespace gtm
