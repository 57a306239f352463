#ifndef GTM_NN_HPP
#define GTM_NN_HPP

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtm/autodiff.hpp"

namespace gtm::nn {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::ParamGroup;
using ad::Var;

/// Owns every learnable tensor of a model. Addresses are stable for the
/// lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, ParamGroup group, Eigen::Index rows, Eigen::Index cols);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::span<const std::unique_ptr<Parameter>> all() const { return params_; }
  std::size_t num_values() const;
  void zero_grad();

  /// Glorot-uniform weights, zero biases, small uniform embeddings.
  void initialize(std::uint64_t seed);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Linear {
  Parameter* w{nullptr};
  Parameter* b{nullptr};

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index out,
         bool bias = true);
  Var operator()(Graph& g, Var x) const;
  Eigen::Index in_dim() const { return w->value.cols(); }
  Eigen::Index out_dim() const { return w->value.rows(); }
};

/// tanh hidden layers followed by a linear output layer.
struct Mlp {
  std::vector<Linear> hidden;
  Linear out;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
      std::span<const Eigen::Index> hidden_sizes, Eigen::Index out_dim);
  Var operator()(Graph& g, Var x) const;
  Eigen::Index in_dim() const { return hidden.empty() ? out.in_dim() : hidden.front().in_dim(); }
};

struct GaussianVars {
  Var mu;
  Var sigma;
};

/// tanh hidden layers feeding a mean head and a softplus scale head.
struct GaussianHead {
  std::vector<Linear> hidden;
  Linear mu;
  Linear sigma;
  double min_sigma{1e-6};

  GaussianHead() = default;
  GaussianHead(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
               std::span<const Eigen::Index> hidden_sizes, Eigen::Index out_dim, double min_sigma);
  GaussianVars operator()(Graph& g, Var x) const;
  Eigen::Index in_dim() const { return hidden.empty() ? mu.in_dim() : hidden.front().in_dim(); }
};

/// r = sig(Wr x + Ur h + br), u = sig(Wu x + Uu h + bu),
/// n = tanh(Wn x + bn_x + r * (Un h + bn_h)), h' = (1 - u) * n + u * h.
struct GruCell {
  Parameter* w_in{nullptr};   // 3H x in
  Parameter* w_hid{nullptr};  // 3H x H
  Parameter* b_in{nullptr};
  Parameter* b_hid{nullptr};

  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index hidden);
  Var operator()(Graph& g, Var x, Var h) const;
  Eigen::Index in_dim() const { return w_in->value.cols(); }
  Eigen::Index hidden_dim() const { return w_hid->value.cols(); }
};

/// Bidirectional pass over a sequence with per-step column masks. Masked
/// steps carry the previous state through unchanged, so the forward state
/// at the last step equals the state at each column's true length and the
/// backward pass starts from zero at each column's true end.
struct BiGru {
  GruCell fwd;
  GruCell bwd;

  BiGru() = default;
  BiGru(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index hidden);

  struct Output {
    std::vector<Var> fwd_states;
    std::vector<Var> bwd_states;
    Var summary;  // [fwd at last live step ; bwd at step 0]
  };
  /// `masks[t]` is a 0/1 row over the batch; empty means every step is live.
  Output run(Graph& g, std::span<const Var> inputs, std::span<const ad::RowVector> masks) const;
  Eigen::Index hidden_dim() const { return fwd.hidden_dim(); }
};

}  // namespace gtm::nn

#endif  // GTM_NN_HPP
