#ifndef GTM_DECODER_HPP
#define GTM_DECODER_HPP

#include <random>
#include <span>
#include <vector>

#include "gtm/encoders.hpp"
#include "gtm/nn.hpp"

namespace gtm {

/// Post token states with their keys projected once per batch.
struct AttentionMemory {
  std::vector<ad::Var> states;  // 2H x B per position
  std::vector<ad::Var> keys;    // A x B per position
  ad::Matrix mask;              // positions x B
};

struct AttentionResult {
  ad::Var context;  // 2H x B
  ad::Var weights;  // positions x B
};

/// Additive attention: score_i = v' tanh(Wq s + Wk h_i + b).
class Attention {
 public:
  Attention() = default;
  Attention(nn::ParameterStore& store, const std::string& name, Eigen::Index query_dim, Eigen::Index memory_dim,
            Eigen::Index attn_dim);

  AttentionMemory prepare(ad::Graph& g, std::span<const ad::Var> states, const ad::Matrix& mask) const;
  AttentionResult operator()(ad::Graph& g, ad::Var query, const AttentionMemory& memory) const;

 private:
  nn::Linear query_;
  nn::Linear key_;
  nn::Linear score_;
};

struct DecoderStep {
  ad::Var state;    // s_j
  ad::Var context;  // c_j
  ad::Var logits;   // W_o s~_j
  ad::Var attention;
};

/// Dropout configuration for a training step; default is evaluation mode.
struct StepRegularizer {
  double dropout{0.0};
  std::mt19937_64* rng{nullptr};
};

enum class DecodeStrategy : std::uint8_t { greedy, sample };

/// Attention GRU decoder with a tanh fusion layer and output projection.
class Decoder {
 public:
  Decoder() = default;
  Decoder(nn::ParameterStore& store, const std::string& name, ad::Parameter& embedding, Eigen::Index init_dim,
          Eigen::Index memory_dim, Eigen::Index hidden, Eigen::Index vocab);

  /// s_0 = W [parts...] + b.
  ad::Var init_state(ad::Graph& g, std::span<const ad::Var> parts) const;
  DecoderStep step(ad::Graph& g, ad::Var prev_embedding, ad::Var s_prev, const AttentionMemory& memory,
                   const StepRegularizer& reg = {}) const;
  ad::Var embed(ad::Graph& g, std::span<const int> ids) const;

  /// Starts from SOS and emits until EOS or max_len tokens. PAD and SOS are
  /// never emitted and EOS is not included in the result. One output per
  /// column of s0; `rng` is only read by the sampling strategy.
  std::vector<std::vector<int>> decode(ad::Graph& g, ad::Var s0, const AttentionMemory& memory, int max_len,
                                       DecodeStrategy strategy, std::mt19937_64* rng) const;

  const Attention& attention() const { return attention_; }
  Eigen::Index hidden_dim() const { return cell_.hidden_dim(); }
  Eigen::Index init_dim() const { return init_.in_dim(); }

 private:
  ad::Parameter* embedding_{nullptr};
  nn::Linear init_;
  Attention attention_;
  nn::GruCell cell_;
  nn::Linear fusion_;
  nn::Linear output_;
};

/// Index of the largest entry of column `col`, skipping `excluded` ids.
int argmax_excluding(const ad::Matrix& logits, Eigen::Index col, std::span<const int> excluded);

}  // namespace gtm

#endif  // GTM_DECODER_HPP
