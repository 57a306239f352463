#include "gtm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gtm::ad {

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::embedding: return "embedding";
    case ParamGroup::generation: return "generation";
    case ParamGroup::prior: return "prior";
    case ParamGroup::recognition: return "recognition";
  }
  return "unknown";
}

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::add_node(Matrix value, bool needs_grad, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::constant(Matrix value) { return add_node(std::move(value), false, nullptr); }

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Parameter* ptr = &p;
  Var v = add_node(p.value, true, [ptr](Graph& g, int self) { ptr->grad += g.node_grad(self); });
  param_nodes_.emplace(&p, v.id);
  return v;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::invalid_argument("backward: var belongs to another graph");
  const Matrix& v = value(root);
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward: root must be 1x1");
  if (!nodes_[static_cast<std::size_t>(root.id)].needs_grad) return;
  grad_buffer(root.id).setOnes();
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this, i);
  }
}

namespace {

void check_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("ops on vars from different graphs");
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

template <class F>
Var unary(Var a, Matrix out, F local_grad) {
  Graph& g = *a.graph;
  const int ia = a.id;
  return g.add_node(std::move(out), g.needs_grad(a), [ia, local_grad](Graph& gr, int self) {
    gr.grad_buffer(ia).array() += local_grad(gr.node_value(ia), gr.node_value(self), gr.node_grad(self)).array();
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Graph& g = *a.graph;
  const int ia = a.id, ib = b.id;
  const bool na = g.needs_grad(a), nb = g.needs_grad(b);
  return g.add_node(a.value() * b.value(), na || nb, [ia, ib, na, nb](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    if (na) gr.grad_buffer(ia).noalias() += d * gr.node_value(ib).transpose();
    if (nb) gr.grad_buffer(ib).noalias() += gr.node_value(ia).transpose() * d;
  });
}

Var affine(Var w, Var x, Var b) {
  check_same_graph(w, x);
  check_same_graph(w, b);
  if (w.cols() != x.rows()) {
    throw std::invalid_argument("affine: weight has " + std::to_string(w.cols()) + " inputs, got " +
                                std::to_string(x.rows()));
  }
  if (b.rows() != w.rows() || b.cols() != 1) throw std::invalid_argument("affine: bias shape mismatch");
  Graph& g = *w.graph;
  Matrix out = w.value() * x.value();
  out.colwise() += b.value().col(0);
  const int iw = w.id, ix = x.id, ib = b.id;
  const bool nw = g.needs_grad(w), nx = g.needs_grad(x), nb = g.needs_grad(b);
  return g.add_node(std::move(out), nw || nx || nb, [iw, ix, ib, nw, nx, nb](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    if (nw) gr.grad_buffer(iw).noalias() += d * gr.node_value(ix).transpose();
    if (nx) gr.grad_buffer(ix).noalias() += gr.node_value(iw).transpose() * d;
    if (nb) gr.grad_buffer(ib).col(0) += d.rowwise().sum();
  });
}

Var add(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b, "add");
  Graph& g = *a.graph;
  const int ia = a.id, ib = b.id;
  const bool na = g.needs_grad(a), nb = g.needs_grad(b);
  return g.add_node(a.value() + b.value(), na || nb, [ia, ib, na, nb](Graph& gr, int self) {
    if (na) gr.grad_buffer(ia) += gr.node_grad(self);
    if (nb) gr.grad_buffer(ib) += gr.node_grad(self);
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b, "sub");
  Graph& g = *a.graph;
  const int ia = a.id, ib = b.id;
  const bool na = g.needs_grad(a), nb = g.needs_grad(b);
  return g.add_node(a.value() - b.value(), na || nb, [ia, ib, na, nb](Graph& gr, int self) {
    if (na) gr.grad_buffer(ia) += gr.node_grad(self);
    if (nb) gr.grad_buffer(ib) -= gr.node_grad(self);
  });
}

Var cmul(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b, "cmul");
  Graph& g = *a.graph;
  const int ia = a.id, ib = b.id;
  const bool na = g.needs_grad(a), nb = g.needs_grad(b);
  return g.add_node(a.value().cwiseProduct(b.value()), na || nb, [ia, ib, na, nb](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    if (na) gr.grad_buffer(ia) += d.cwiseProduct(gr.node_value(ib));
    if (nb) gr.grad_buffer(ib) += d.cwiseProduct(gr.node_value(ia));
  });
}

Var scale(Var a, double s) {
  return unary(a, a.value() * s, [s](const Matrix&, const Matrix&, const Matrix& d) -> Matrix { return d * s; });
}

Var one_minus(Var a) {
  Matrix out = (1.0 - a.value().array()).matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix&, const Matrix& d) -> Matrix { return -d; });
}

Var add_scalar(Var a, double s) {
  Matrix out = (a.value().array() + s).matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix&, const Matrix& d) -> Matrix { return d; });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix& y, const Matrix& d) -> Matrix {
    return (d.array() * (1.0 - y.array().square())).matrix();
  });
}

Var sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(out), [](const Matrix&, const Matrix& y, const Matrix& d) -> Matrix {
    return (d.array() * y.array() * (1.0 - y.array())).matrix();
  });
}

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Var softplus(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return softplus_scalar(x); });
  return unary(a, std::move(out), [](const Matrix& x, const Matrix&, const Matrix& d) -> Matrix {
    return (d.array() / (1.0 + (-x.array()).exp())).matrix();
  });
}

Var clamp_min(Var a, double floor) {
  Matrix out = a.value().cwiseMax(floor);
  return unary(a, std::move(out), [floor](const Matrix& x, const Matrix&, const Matrix& d) -> Matrix {
    return (x.array() >= floor).select(d, 0.0);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Graph& g = *parts[0].graph;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    check_same_graph(parts[0], p);
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: batch size mismatch");
    rows += p.rows();
    any_grad = any_grad || g.needs_grad(p);
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.rows();
  }
  return g.add_node(std::move(out), any_grad, [ids, offsets](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.needs_grad(Var{&gr, ids[k]})) continue;
      const Eigen::Index n = gr.node_value(ids[k]).rows();
      gr.grad_buffer(ids[k]) += d.middleRows(offsets[k], n);
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  Graph& g = *a.graph;
  const int ia = a.id;
  return g.add_node(a.value().middleRows(start, n), g.needs_grad(a), [ia, start, n](Graph& gr, int self) {
    gr.grad_buffer(ia).middleRows(start, n) += gr.node_grad(self);
  });
}

Var mul_row_broadcast(Var a, Var r) {
  check_same_graph(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("mul_row_broadcast: shape mismatch");
  Graph& g = *a.graph;
  Matrix out = a.value() * r.value().row(0).asDiagonal();
  const int ia = a.id, ir = r.id;
  const bool na = g.needs_grad(a), nr = g.needs_grad(r);
  return g.add_node(std::move(out), na || nr, [ia, ir, na, nr](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    if (na) gr.grad_buffer(ia) += d * gr.node_value(ir).row(0).asDiagonal();
    if (nr) gr.grad_buffer(ir).row(0) += d.cwiseProduct(gr.node_value(ia)).colwise().sum();
  });
}

Var select_cols(const RowVector& mask, Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b, "select_cols");
  if (mask.size() != a.cols()) throw std::invalid_argument("select_cols: mask size mismatch");
  Graph& g = *a.graph;
  Matrix out = b.value();
  for (Eigen::Index c = 0; c < mask.size(); ++c) {
    if (mask(c) != 0.0) out.col(c) = a.value().col(c);
  }
  const int ia = a.id, ib = b.id;
  const bool na = g.needs_grad(a), nb = g.needs_grad(b);
  return g.add_node(std::move(out), na || nb, [mask, ia, ib, na, nb](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    for (Eigen::Index c = 0; c < mask.size(); ++c) {
      if (mask(c) != 0.0) {
        if (na) gr.grad_buffer(ia).col(c) += d.col(c);
      } else if (nb) {
        gr.grad_buffer(ib).col(c) += d.col(c);
      }
    }
  });
}

Var lookup(Graph& g, Parameter& table, std::span<const int> ids) {
  const Eigen::Index dim = table.value.rows();
  Matrix out(dim, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] < 0 || ids[b] >= table.value.cols()) {
      throw std::out_of_range("lookup: id " + std::to_string(ids[b]) + " outside table " + table.name);
    }
    out.col(static_cast<Eigen::Index>(b)) = table.value.col(ids[b]);
  }
  Parameter* ptr = &table;
  std::vector<int> idv(ids.begin(), ids.end());
  return g.add_node(std::move(out), true, [ptr, idv](Graph& gr, int self) {
    const Matrix& d = gr.node_grad(self);
    for (std::size_t b = 0; b < idv.size(); ++b) ptr->grad.col(idv[b]) += d.col(static_cast<Eigen::Index>(b));
  });
}

Var masked_softmax_cols(Var scores, const Matrix& mask) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols()) {
    throw std::invalid_argument("masked_softmax_cols: mask shape mismatch");
  }
  const Matrix& s = scores.value();
  Matrix out = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      if (mask(r, c) == 0.0) continue;
      any = true;
      // NaN scores propagate so the caller sees a non-finite loss.
      mx = std::isnan(s(r, c)) ? s(r, c) : std::max(mx, s(r, c));
      if (std::isnan(mx)) break;
    }
    if (!any) throw std::invalid_argument("masked_softmax_cols: every position masked");
    double z = 0.0;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      if (mask(r, c) != 0.0) {
        out(r, c) = std::exp(s(r, c) - mx);
        z += out(r, c);
      }
    }
    out.col(c) /= z;
  }
  Graph& g = *scores.graph;
  const int is = scores.id;
  return g.add_node(std::move(out), g.needs_grad(scores), [is](Graph& gr, int self) {
    const Matrix& y = gr.node_value(self);
    const Matrix& d = gr.node_grad(self);
    const RowVector dot = d.cwiseProduct(y).colwise().sum();
    Matrix gin = y.cwiseProduct(d - Matrix::Ones(d.rows(), 1) * dot);
    gr.grad_buffer(is) += gin;
  });
}

Matrix softmax_cols(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Var pick_neg_log_softmax(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Matrix& l = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != l.cols() || weights.size() != targets.size()) {
    throw std::invalid_argument("pick_neg_log_softmax: batch size mismatch");
  }
  Matrix probs = softmax_cols(l);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < l.cols(); ++c) {
    const double w = weights[static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    const int t = targets[static_cast<std::size_t>(c)];
    if (t < 0 || t >= l.rows()) throw std::out_of_range("pick_neg_log_softmax: target out of range");
    const double mx = l.col(c).maxCoeff();
    const double lse = mx + std::log((l.col(c).array() - mx).exp().sum());
    loss += w * (lse - l(t, c));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  Graph& g = *logits.graph;
  const int il = logits.id;
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<double> wv(weights.begin(), weights.end());
  return g.add_node(std::move(out), g.needs_grad(logits), [il, tv, wv, probs = std::move(probs)](Graph& gr, int self) {
    const double d = gr.node_grad(self)(0, 0);
    Matrix& gl = gr.grad_buffer(il);
    for (std::size_t c = 0; c < tv.size(); ++c) {
      if (wv[c] == 0.0) continue;
      const auto col = static_cast<Eigen::Index>(c);
      gl.col(col) += d * wv[c] * probs.col(col);
      gl(tv[c], col) -= d * wv[c];
    }
  });
}

Var softmax_xent_counts(Var logits, const Matrix& counts) {
  const Matrix& l = logits.value();
  if (counts.rows() != l.rows() || counts.cols() != l.cols()) {
    throw std::invalid_argument("softmax_xent_counts: shape mismatch");
  }
  Matrix probs = softmax_cols(l);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < l.cols(); ++c) {
    const double total = counts.col(c).sum();
    if (total == 0.0) continue;
    const double mx = l.col(c).maxCoeff();
    const double lse = mx + std::log((l.col(c).array() - mx).exp().sum());
    loss += total * lse - counts.col(c).dot(l.col(c));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  Graph& g = *logits.graph;
  const int il = logits.id;
  RowVector totals = counts.colwise().sum();
  return g.add_node(std::move(out), g.needs_grad(logits),
                    [il, counts, totals, probs = std::move(probs)](Graph& gr, int self) {
                      const double d = gr.node_grad(self)(0, 0);
                      gr.grad_buffer(il) += d * (probs * totals.asDiagonal() - counts);
                    });
}

Var gaussian_kl(Var mu_q, Var sig_q, Var mu_p, Var sig_p) {
  check_same_shape(mu_q, sig_q, "gaussian_kl");
  check_same_shape(mu_q, mu_p, "gaussian_kl");
  check_same_shape(mu_q, sig_p, "gaussian_kl");
  const auto mq = mu_q.value().array(), sq = sig_q.value().array();
  const auto mp = mu_p.value().array(), sp = sig_p.value().array();
  if ((sq <= 0.0).any() || (sp <= 0.0).any()) throw std::domain_error("gaussian_kl: non-positive sigma");
  const Eigen::ArrayXXd diff = mq - mp;
  const Eigen::ArrayXXd vp = sp.square();
  const Eigen::ArrayXXd terms = (sp / sq).log() + (sq.square() + diff.square()) / (2.0 * vp) - 0.5;
  Matrix out = terms.matrix().colwise().sum();
  Graph& g = *mu_q.graph;
  const int a = mu_q.id, b = sig_q.id, c = mu_p.id, e = sig_p.id;
  const bool any = g.needs_grad(mu_q) || g.needs_grad(sig_q) || g.needs_grad(mu_p) || g.needs_grad(sig_p);
  return g.add_node(std::move(out), any, [a, b, c, e](Graph& gr, int self) {
    const Eigen::ArrayXXd d = (Matrix::Ones(gr.node_value(a).rows(), 1) * gr.node_grad(self)).array();
    const auto mq = gr.node_value(a).array(), sq = gr.node_value(b).array();
    const auto mp = gr.node_value(c).array(), sp = gr.node_value(e).array();
    const Eigen::ArrayXXd vp = sp.square();
    const Eigen::ArrayXXd diff = mq - mp;
    if (gr.needs_grad(Var{&gr, a})) gr.grad_buffer(a).array() += d * diff / vp;
    if (gr.needs_grad(Var{&gr, c})) gr.grad_buffer(c).array() -= d * diff / vp;
    if (gr.needs_grad(Var{&gr, b})) gr.grad_buffer(b).array() += d * (sq / vp - 1.0 / sq);
    if (gr.needs_grad(Var{&gr, e})) {
      gr.grad_buffer(e).array() += d * (1.0 / sp - (sq.square() + diff.square()) / (vp * sp));
    }
  });
}

Var gaussian_kl_std(Var mu_q, Var sig_q) {
  check_same_shape(mu_q, sig_q, "gaussian_kl_std");
  const auto mq = mu_q.value().array(), sq = sig_q.value().array();
  if ((sq <= 0.0).any()) throw std::domain_error("gaussian_kl_std: non-positive sigma");
  const Eigen::ArrayXXd terms = 0.5 * (mq.square() + sq.square() - 1.0) - sq.log();
  Matrix out = terms.matrix().colwise().sum();
  Graph& g = *mu_q.graph;
  const int a = mu_q.id, b = sig_q.id;
  return g.add_node(std::move(out), g.needs_grad(mu_q) || g.needs_grad(sig_q), [a, b](Graph& gr, int self) {
    const Eigen::ArrayXXd d = (Matrix::Ones(gr.node_value(a).rows(), 1) * gr.node_grad(self)).array();
    if (gr.needs_grad(Var{&gr, a})) gr.grad_buffer(a).array() += d * gr.node_value(a).array();
    if (gr.needs_grad(Var{&gr, b})) {
      const auto sq = gr.node_value(b).array();
      gr.grad_buffer(b).array() += d * (sq - 1.0 / sq);
    }
  });
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  Graph& g = *a.graph;
  const int ia = a.id;
  return g.add_node(std::move(out), g.needs_grad(a), [ia](Graph& gr, int self) {
    gr.grad_buffer(ia).array() += gr.node_grad(self)(0, 0);
  });
}

Var add_n(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("add_n: no parts");
  Graph& g = *parts[0].graph;
  Matrix out = parts[0].value();
  bool any = g.needs_grad(parts[0]);
  std::vector<int> ids{parts[0].id};
  for (std::size_t k = 1; k < parts.size(); ++k) {
    check_same_shape(parts[0], parts[k], "add_n");
    out += parts[k].value();
    any = any || g.needs_grad(parts[k]);
    ids.push_back(parts[k].id);
  }
  return g.add_node(std::move(out), any, [ids](Graph& gr, int self) {
    for (int id : ids) {
      if (gr.needs_grad(Var{&gr, id})) gr.grad_buffer(id) += gr.node_grad(self);
    }
  });
}

Var dropout(Var a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Graph& g = *a.graph;
  const int ia = a.id;
  Matrix out = a.value().cwiseProduct(mask);
  return g.add_node(std::move(out), g.needs_grad(a), [ia, mask = std::move(mask)](Graph& gr, int self) {
    gr.grad_buffer(ia) += gr.node_grad(self).cwiseProduct(mask);
  });
}

}  // namespace gtm::ad
