#ifndef GTM_CONFIG_HPP
#define GTM_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gtm/model.hpp"

namespace gtm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training configuration. Text form is flat key=value lines; a `preset`
/// line (paper or desk) supplies defaults that the other lines override.
struct TrainConfig {
  std::string preset{"desk"};
  std::size_t vocab_size{40000};
  int max_len{30};
  int embed_dim{64};
  int hidden{64};
  int latent_dim{16};
  int mlp_hidden{64};
  double dropout{0.2};
  int batch_size{16};
  double learning_rate{2e-3};
  double word_drop{0.25};
  /// Optimizer steps for lambda to reach 1; 0 means one epoch.
  std::int64_t anneal_steps{0};
  int max_epochs{200};
  /// Epochs without validation improvement before stopping; 0 disables.
  int patience{10};
  std::uint64_t seed{1};
  bool use_bow{true};
  bool use_anneal{true};
  double clip_norm{5.0};
  double min_sigma{1e-6};

  static TrainConfig paper();
  static TrainConfig desk();
  static TrainConfig from_preset(std::string_view name);

  /// Parses key=value text. Blank lines and lines starting with '#' are
  /// ignored. Unknown keys raise ConfigError naming the key.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  void set(std::string_view key, std::string_view value);
  std::string to_text() const;
  static std::vector<std::string> keys();

  void validate() const;
  ModelConfig model_config(std::size_t actual_vocab_size) const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace gtm

#endif  // GTM_CONFIG_HPP
