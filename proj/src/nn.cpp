#include "gtm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gtm::nn {

Parameter& ParameterStore::add(const std::string& name, ParamGroup group, Eigen::Index rows, Eigen::Index cols) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back(std::make_unique<Parameter>(name, group, rows, cols));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("no parameter named " + name);
  return *p;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    const bool is_bias = p->value.cols() == 1 && p->name.ends_with(".b");
    if (is_bias) {
      p->value.setZero();
      continue;
    }
    double limit = 0.1;
    if (p->group != ParamGroup::embedding) {
      limit = std::sqrt(6.0 / static_cast<double>(p->value.rows() + p->value.cols()));
    }
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = u(rng);
  }
  zero_grad();
}

Linear::Linear(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index out,
               bool bias)
    : w(&store.add(name + ".w", group, out, in)), b(bias ? &store.add(name + ".b", group, out, 1) : nullptr) {}

Var Linear::operator()(Graph& g, Var x) const {
  if (x.rows() != in_dim()) {
    throw std::invalid_argument(w->name + ": expected input dim " + std::to_string(in_dim()) + ", got " +
                                std::to_string(x.rows()));
  }
  if (b == nullptr) return ad::matmul(g.param(*w), x);
  return ad::affine(g.param(*w), x, g.param(*b));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
         std::span<const Eigen::Index> hidden_sizes, Eigen::Index out_dim) {
  Eigen::Index prev = in;
  for (std::size_t i = 0; i < hidden_sizes.size(); ++i) {
    hidden.emplace_back(store, name + ".h" + std::to_string(i), group, prev, hidden_sizes[i]);
    prev = hidden_sizes[i];
  }
  out = Linear(store, name + ".out", group, prev, out_dim);
}

Var Mlp::operator()(Graph& g, Var x) const {
  for (const Linear& l : hidden) x = ad::tanh(l(g, x));
  return out(g, x);
}

GaussianHead::GaussianHead(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                           std::span<const Eigen::Index> hidden_sizes, Eigen::Index out_dim, double min_sig)
    : min_sigma(min_sig) {
  Eigen::Index prev = in;
  for (std::size_t i = 0; i < hidden_sizes.size(); ++i) {
    hidden.emplace_back(store, name + ".h" + std::to_string(i), group, prev, hidden_sizes[i]);
    prev = hidden_sizes[i];
  }
  mu = Linear(store, name + ".mu", group, prev, out_dim);
  sigma = Linear(store, name + ".sigma", group, prev, out_dim);
}

GaussianVars GaussianHead::operator()(Graph& g, Var x) const {
  for (const Linear& l : hidden) x = ad::tanh(l(g, x));
  return {mu(g, x), ad::clamp_min(ad::softplus(sigma(g, x)), min_sigma)};
}

GruCell::GruCell(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                 Eigen::Index hidden)
    : w_in(&store.add(name + ".w_in", group, 3 * hidden, in)),
      w_hid(&store.add(name + ".w_hid", group, 3 * hidden, hidden)),
      b_in(&store.add(name + ".b_in.b", group, 3 * hidden, 1)),
      b_hid(&store.add(name + ".b_hid.b", group, 3 * hidden, 1)) {}

Var GruCell::operator()(Graph& g, Var x, Var h) const {
  const Eigen::Index n = hidden_dim();
  if (x.rows() != in_dim()) {
    throw std::invalid_argument(w_in->name + ": expected input dim " + std::to_string(in_dim()) + ", got " +
                                std::to_string(x.rows()));
  }
  if (h.rows() != n) {
    throw std::invalid_argument(w_hid->name + ": expected state dim " + std::to_string(n) + ", got " +
                                std::to_string(h.rows()));
  }
  Var gx = ad::affine(g.param(*w_in), x, g.param(*b_in));
  Var gh = ad::affine(g.param(*w_hid), h, g.param(*b_hid));
  Var r = ad::sigmoid(ad::add(ad::slice_rows(gx, 0, n), ad::slice_rows(gh, 0, n)));
  Var u = ad::sigmoid(ad::add(ad::slice_rows(gx, n, n), ad::slice_rows(gh, n, n)));
  Var cand = ad::tanh(ad::add(ad::slice_rows(gx, 2 * n, n), ad::cmul(r, ad::slice_rows(gh, 2 * n, n))));
  return ad::add(ad::cmul(ad::one_minus(u), cand), ad::cmul(u, h));
}

BiGru::BiGru(ParameterStore& store, const std::string& name, ParamGroup group, Eigen::Index in, Eigen::Index hidden)
    : fwd(store, name + ".fwd", group, in, hidden), bwd(store, name + ".bwd", group, in, hidden) {}

BiGru::Output BiGru::run(Graph& g, std::span<const Var> inputs, std::span<const ad::RowVector> masks) const {
  if (inputs.empty()) throw std::invalid_argument("BiGru: empty sequence");
  if (!masks.empty() && masks.size() != inputs.size()) throw std::invalid_argument("BiGru: mask count mismatch");
  const Eigen::Index batch = inputs[0].cols();
  const std::size_t steps = inputs.size();
  Output out;
  out.fwd_states.resize(steps);
  out.bwd_states.resize(steps);

  Var h = g.constant(Matrix::Zero(hidden_dim(), batch));
  for (std::size_t t = 0; t < steps; ++t) {
    Var next = fwd(g, inputs[t], h);
    h = masks.empty() ? next : ad::select_cols(masks[t], next, h);
    out.fwd_states[t] = h;
  }
  Var hb = g.constant(Matrix::Zero(hidden_dim(), batch));
  for (std::size_t k = steps; k-- > 0;) {
    Var next = bwd(g, inputs[k], hb);
    hb = masks.empty() ? next : ad::select_cols(masks[k], next, hb);
    out.bwd_states[k] = hb;
  }
  const Var parts[] = {out.fwd_states.back(), out.bwd_states.front()};
  out.summary = ad::concat_rows(parts);
  return out;
}

}  // namespace gtm::nn
