#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace bepa::numerics {

using Matrix = Eigen::MatrixXd;

// Reverse-mode tape over dense double matrices. Operations append nodes in
// execution order, which is already a topological order of the dataflow
// graph, so the backward pass is a single reverse sweep: each node's adjoint
// rule runs exactly once, after every consumer has contributed to its output
// gradient. Scalars are 1x1 matrices.
//
// One forward graph + one backward sweep per tape is the intended lifecycle.
class Tape {
 public:
  using NodeId = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId leaf(Matrix value);

  const Matrix& value(NodeId id) const { return node(id).value; }
  bool has_grad(NodeId id) const { return node(id).grad.size() > 0; }
  // Gradient of the last backward root w.r.t. node id. Undefined before
  // backward; nodes with no path to the root never allocate one (see has_grad).
  const Matrix& grad(NodeId id) const { return node(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps. root must be 1x1.
  void backward(NodeId root);
  // Seeds an arbitrary node with an explicit adjoint (vector-Jacobian sweep).
  void backward_seed(NodeId id, const Matrix& seed);

  // -- arithmetic -----------------------------------------------------------
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId x, NodeId row);  // broadcast a 1xC row over rows of x
  NodeId scale(NodeId x, double c);
  NodeId add_const(NodeId x, double c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);  // A * B^T
  NodeId transpose(NodeId x);
  NodeId linear(NodeId x, NodeId w, NodeId b);  // x*w + row broadcast b

  // -- neural-net pieces ----------------------------------------------------
  // Row i = tok[ids[i]] + pos[positions[i]] + seg[segments[i]].
  NodeId embed_gather(NodeId tok, NodeId pos, NodeId seg,
                      std::vector<int> ids, std::vector<int> positions,
                      std::vector<int> segments);
  // Row-wise layer norm with learned gain/bias (1xC each); biased variance.
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);
  NodeId gelu(NodeId x);  // exact erf form
  // Elementwise product with a constant keep/scale mask (inverted dropout).
  NodeId dropout(NodeId x, Matrix mask);
  // Q,K,V are [n x d]; all rows attend to all rows (occlusion is handled by
  // compacting the input upstream). Softmax uses per-row max subtraction.
  // prob_dropout, if given, holds one [n x n] keep/scale mask per head.
  NodeId multi_head_attention(NodeId q, NodeId k, NodeId v, int n_heads,
                              const std::vector<Matrix>* prob_dropout = nullptr);

  // -- reshaping ------------------------------------------------------------
  NodeId select_row(NodeId x, int row);           // 1xC slice
  NodeId concat_rows(const std::vector<NodeId>& parts);

  // -- losses and reductions ------------------------------------------------
  // Rows scaled to unit L2 norm; throws NumericalError if any norm < 1e-12.
  NodeId row_normalize(NodeId x);
  // Mean over all rows of -log softmax(row)[label].
  NodeId ce_rows_mean(NodeId logits, std::vector<int> labels);
  // Sum over the listed rows of -log softmax(row)[label].
  NodeId ce_sum(NodeId logits, std::vector<int> rows, std::vector<int> labels);
  NodeId mse(NodeId a, NodeId b);                  // mean over all entries
  NodeId rowwise_dot_mean(NodeId a, NodeId b);     // mean_i <a_i, b_i>
  NodeId weighted_sum(NodeId x, Matrix weights);   // sum(x .* weights)

  // Forward intermediates kept for inspection (attention probabilities, one
  // matrix per head). Empty for most nodes.
  const std::vector<Matrix>& aux(NodeId id) const { return node(id).aux; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backprop;  // empty for leaves
    std::vector<Matrix> aux;
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  NodeId push(Matrix value, std::function<void()> backprop,
              std::vector<Matrix> aux = {});
  // Accumulation buffer for a node's gradient, zero-initialized on first use.
  Matrix& grad_buf(NodeId id);
  void acc(NodeId id, const Matrix& g);
  void sweep(NodeId from);

  std::vector<Node> nodes_;
};

}  // namespace bepa::numerics
