#ifndef GTM_OPTIMIZER_HPP
#define GTM_OPTIMIZER_HPP

#include <cstdint>
#include <vector>

#include "gtm/nn.hpp"

namespace gtm {

/// Adam over every tensor of a ParameterStore. Moment buffers follow the
/// store's registration order.
class Adam {
 public:
  Adam() = default;
  Adam(const nn::ParameterStore& store, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  /// Rescales gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  static double clip_global_norm(nn::ParameterStore& store, double max_norm);

  void step(nn::ParameterStore& store);

  double learning_rate() const { return lr_; }
  std::int64_t steps_taken() const { return t_; }

  std::vector<ad::Matrix>& first_moments() { return m_; }
  std::vector<ad::Matrix>& second_moments() { return v_; }
  const std::vector<ad::Matrix>& first_moments() const { return m_; }
  const std::vector<ad::Matrix>& second_moments() const { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  double lr_{1e-3};
  double beta1_{0.9};
  double beta2_{0.999};
  double eps_{1e-8};
  std::int64_t t_{0};
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
};

}  // namespace gtm

#endif  // GTM_OPTIMIZER_HPP
