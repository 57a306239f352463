#include "gtm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace gtm {

Adam::Adam(const nn::ParameterStore& store, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  for (const auto& p : store.all()) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::clip_global_norm(nn::ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.all()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : store.all()) p->grad *= s;
  }
  return norm;
}

void Adam::step(nn::ParameterStore& store) {
  const auto params = store.all();
  if (params.size() != m_.size()) throw std::logic_error("Adam: parameter store changed shape");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace gtm
