#ifndef GTM_AUTODIFF_HPP
#define GTM_AUTODIFF_HPP

// Tape-based reverse-mode differentiation over column-batched matrices.
//
// Every value is a (features x batch) matrix of doubles. A Graph records
// nodes in creation order, so creation order is already a topological order
// and backward() is a single reverse sweep.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gtm::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Which network a learnable tensor belongs to.
enum class ParamGroup : std::uint8_t { embedding, generation, prior, recognition };

const char* to_string(ParamGroup g);

struct Parameter {
  std::string name;
  ParamGroup group{ParamGroup::generation};
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, ParamGroup g, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), group(g), value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

class Graph;

/// Lightweight handle to a node in a Graph.
struct Var {
  Graph* graph{nullptr};
  int id{-1};

  bool valid() const { return graph != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// One node per parameter per graph; repeated calls return the same node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every
  /// reachable node and parameter.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backprop = std::function<void(Graph&, int)>;
  Var add_node(Matrix value, bool needs_grad, Backprop backprop);
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Matrix& grad_buffer(int id);
  const Matrix& node_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Matrix& node_value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad{false};
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b);
/// W x + b, with the bias column broadcast across the batch.
Var affine(Var w, Var x, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
/// 1 - a
Var one_minus(Var a);
/// a + s*1
Var add_scalar(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
/// max(a, floor) elementwise; gradient is zero where the floor is active.
Var clamp_min(Var a, double floor);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
/// Multiplies column b of `a` by r(0, b).
Var mul_row_broadcast(Var a, Var r);
/// m ? a : b per column, where m is a fixed 0/1 row.
Var select_cols(const RowVector& mask, Var a, Var b);
/// Columns of the table selected by ids.
Var lookup(Graph& g, Parameter& table, std::span<const int> ids);
/// Softmax down each column restricted to rows where mask == 1. Masked
/// rows get exactly zero weight. Every column needs at least one live row.
Var masked_softmax_cols(Var scores, const Matrix& mask);
/// Sum over columns b of weight[b] * -log softmax(logits.col(b))[target[b]].
Var pick_neg_log_softmax(Var logits, std::span<const int> targets, std::span<const double> weights);
/// -sum(counts .* log_softmax(logits)), columnwise softmax.
Var softmax_xent_counts(Var logits, const Matrix& counts);
/// Per-column KL(N(mu_q, sig_q) || N(mu_p, sig_p)) summed over rows; 1 x batch.
Var gaussian_kl(Var mu_q, Var sig_q, Var mu_p, Var sig_p);
/// KL against the standard normal; 1 x batch.
Var gaussian_kl_std(Var mu_q, Var sig_q);
Var sum_all(Var a);
Var add_n(std::span<const Var> parts);
/// Inverted dropout with a mask drawn from rng. p == 0 returns a unchanged.
Var dropout(Var a, double p, std::mt19937_64& rng);

// Numeric helpers shared by forward-only code paths.
Matrix softmax_cols(const Matrix& logits);
double softplus_scalar(double x);

}  // namespace gtm::ad

#endif  // GTM_AUTODIFF_HPP
