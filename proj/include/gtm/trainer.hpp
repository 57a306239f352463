#ifndef GTM_TRAINER_HPP
#define GTM_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtm/checkpoint.hpp"
#include "gtm/config.hpp"
#include "gtm/model.hpp"
#include "gtm/objective.hpp"
#include "gtm/optimizer.hpp"
#include "json.hpp"

namespace gtm {

struct EvalMetrics {
  LossBreakdown loss;  // lambda = 1, latents at posterior means
  double kl_per_word{0.0};
  double question_token_accuracy{0.0};
  std::size_t examples{0};
};

/// One line of the training log.
struct TrainingLogRecord {
  std::string kind{"epoch"};  // "epoch" or "abort"
  std::int64_t epoch{0};
  std::int64_t step{0};
  /// Epoch means over training batches (abort: the offending batch).
  LossBreakdown train;
  /// Summed KL over the epoch divided by question+answer target words.
  double kl_per_word{0.0};
  std::optional<EvalMetrics> valid;
  double seconds{0.0};
};

nlohmann::ordered_json to_json(const LossBreakdown& l);
nlohmann::ordered_json to_json(const TrainingLogRecord& r);

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainingLogRecord record, std::filesystem::path record_path)
      : std::runtime_error(what), record_(std::move(record)), record_path_(std::move(record_path)) {}
  const TrainingLogRecord& record() const { return record_; }
  /// Empty when training ran without an output directory.
  const std::filesystem::path& record_path() const { return record_path_; }

 private:
  TrainingLogRecord record_;
  std::filesystem::path record_path_;
};

/// Teacher-forced evaluation: lambda = 1, no word drop or dropout, every
/// latent at its posterior mean.
EvalMetrics evaluate_teacher_forced(const GtmModel& model, std::span<const EncodedTriple> data, bool use_bow,
                                    int batch_size);

std::vector<EncodedTriple> encode_corpus(std::span<const Triple> corpus, const Vocabulary& vocab, int max_len);

struct FitOptions {
  /// Receives latest.ckpt, best.ckpt, train_log.jsonl; nothing is written when unset.
  std::optional<std::filesystem::path> out_dir;
  /// Called after each epoch; returning false stops training.
  std::function<bool(const TrainingLogRecord&)> on_epoch;
};

class Trainer {
 public:
  Trainer(TrainConfig config, Vocabulary vocab);
  /// Resumes from a checkpoint, keeping its step counter and optimizer state.
  explicit Trainer(Checkpoint checkpoint);

  /// One pass over `train` in a seed-derived order, then validation when
  /// `valid` is non-empty. Throws TrainingAborted on a non-finite loss.
  TrainingLogRecord run_epoch(std::span<const EncodedTriple> train, std::span<const EncodedTriple> valid);

  /// Epochs until max_epochs, patience on validation total, or on_epoch
  /// returning false.
  std::vector<TrainingLogRecord> fit(std::span<const EncodedTriple> train, std::span<const EncodedTriple> valid,
                                     const FitOptions& options = {});

  void save(const std::filesystem::path& path) const;

  const TrainConfig& config() const { return config_; }
  GtmModel& model() { return *model_; }
  const GtmModel& model() const { return *model_; }
  std::int64_t step() const { return step_; }
  std::int64_t epoch() const { return epoch_; }
  double lambda_at(std::int64_t step, std::size_t train_size) const;

 private:
  void write_abort(const std::optional<std::filesystem::path>& out_dir, TrainingLogRecord record);

  TrainConfig config_;
  std::unique_ptr<GtmModel> model_;
  Adam adam_;
  std::int64_t step_{0};
  std::int64_t epoch_{0};
  std::optional<std::filesystem::path> abort_dir_;
};

/// Seed for epoch-level randomness: a SplitMix64 mix of the run seed and the
/// epoch index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace gtm

#endif  // GTM_TRAINER_HPP
