#ifndef GTM_CHECKPOINT_HPP
#define GTM_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>

#include "gtm/config.hpp"
#include "gtm/model.hpp"
#include "gtm/optimizer.hpp"

namespace gtm {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic "GTMCKPT1", u32 version, config text, vocabulary
/// text, u64 step, u64 epoch, tensors as (name, rows, cols, doubles),
/// optional Adam state, trailing FNV-1a 64 checksum of everything before it.
struct Checkpoint {
  TrainConfig config;
  std::unique_ptr<GtmModel> model;
  std::int64_t step{0};
  std::int64_t epoch{0};
  /// Present when the file was written with optimizer state.
  std::optional<Adam> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const GtmModel& model, const TrainConfig& config,
                     std::int64_t step, std::int64_t epoch, const Adam* optimizer = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, but raises CheckpointError naming the first model-shape field
/// that differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace gtm

#endif  // GTM_CHECKPOINT_HPP
