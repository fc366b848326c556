#include "bepa/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "bepa/errors.hpp"

namespace bepa::numerics {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double m = scores.row(r).maxCoeff();
    p.row(r) = (scores.row(r).array() - m).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double log_sum_exp(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

constexpr double kInvSqrt2Pi = 0.3989422804014327;

}  // namespace

Tape::Node& Tape::node(NodeId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw InvalidArgument("tape: bad node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(NodeId id) const {
  return const_cast<Tape*>(this)->node(id);
}

Tape::NodeId Tape::push(Matrix value, std::function<void()> backprop,
                        std::vector<Matrix> aux) {
  nodes_.push_back(
      {std::move(value), Matrix(), std::move(backprop), std::move(aux)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Matrix value) { return push(std::move(value), {}); }

Matrix& Tape::grad_buf(NodeId id) {
  Node& n = node(id);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::acc(NodeId id, const Matrix& g) { grad_buf(id) += g; }

void Tape::sweep(NodeId from) {
  // Reverse creation order is reverse topological order; nodes never reached
  // by the root's adjoint keep an empty grad and are skipped.
  for (NodeId id = from; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backprop && n.grad.size() > 0) n.backprop();
  }
}

void Tape::backward(NodeId root) {
  const Matrix& v = value(root);
  require(v.rows() == 1 && v.cols() == 1, "backward: root must be scalar");
  grad_buf(root)(0, 0) += 1.0;
  sweep(root);
}

void Tape::backward_seed(NodeId id, const Matrix& seed) {
  const Matrix& v = value(id);
  require(seed.rows() == v.rows() && seed.cols() == v.cols(),
          "backward_seed: seed shape mismatch");
  grad_buf(id) += seed;
  sweep(id);
}

// Each op pins its output id (the next slot) before pushing so the adjoint
// closure can read its own output gradient during the sweep.

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(A + B, [this, a, b, out]() {
    const Matrix& g = grad(out);
    acc(a, g);
    acc(b, g);
  });
}

Tape::NodeId Tape::add_row(NodeId x, NodeId row) {
  const Matrix& X = value(x);
  const Matrix& R = value(row);
  require(R.rows() == 1 && R.cols() == X.cols(), "add_row: need 1xC row");
  Matrix y = X;
  y.rowwise() += R.row(0);
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y), [this, x, row, out]() {
    const Matrix& g = grad(out);
    acc(x, g);
    acc(row, g.colwise().sum());
  });
}

Tape::NodeId Tape::scale(NodeId x, double c) {
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(value(x) * c, [this, x, c, out]() { acc(x, grad(out) * c); });
}

Tape::NodeId Tape::add_const(NodeId x, double c) {
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push((value(x).array() + c).matrix(),
              [this, x, out]() { acc(x, grad(out)); });
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(A * B, [this, a, b, out]() {
    const Matrix& g = grad(out);
    acc(a, g * value(b).transpose());
    acc(b, value(a).transpose() * g);
  });
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols() == B.cols(), "matmul_nt: column counts differ");
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(A * B.transpose(), [this, a, b, out]() {
    const Matrix& g = grad(out);
    acc(a, g * value(b));
    acc(b, g.transpose() * value(a));
  });
}

Tape::NodeId Tape::transpose(NodeId x) {
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(value(x).transpose(),
              [this, x, out]() { acc(x, grad(out).transpose()); });
}

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  const Matrix& X = value(x);
  const Matrix& W = value(w);
  const Matrix& B = value(b);
  require(X.cols() == W.rows(), "linear: inner dimensions differ");
  require(B.rows() == 1 && B.cols() == W.cols(), "linear: bias must be 1xC");
  Matrix y = X * W;
  y.rowwise() += B.row(0);
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y), [this, x, w, b, out]() {
    const Matrix& g = grad(out);
    acc(x, g * value(w).transpose());
    acc(w, value(x).transpose() * g);
    acc(b, g.colwise().sum());
  });
}

Tape::NodeId Tape::embed_gather(NodeId tok, NodeId pos, NodeId seg,
                                std::vector<int> ids, std::vector<int> positions,
                                std::vector<int> segments) {
  const Matrix& T = value(tok);
  const Matrix& P = value(pos);
  const Matrix& S = value(seg);
  const std::size_t n = ids.size();
  require(positions.size() == n && segments.size() == n,
          "embed_gather: index vectors differ in length");
  require(n > 0, "embed_gather: empty sequence");
  require(T.cols() == P.cols() && T.cols() == S.cols(),
          "embed_gather: embedding widths differ");
  Matrix y(static_cast<Eigen::Index>(n), T.cols());
  for (std::size_t i = 0; i < n; ++i) {
    require(ids[i] >= 0 && ids[i] < T.rows(), "embed_gather: token id range");
    require(positions[i] >= 0 && positions[i] < P.rows(),
            "embed_gather: position range");
    require(segments[i] >= 0 && segments[i] < S.rows(),
            "embed_gather: segment range");
    y.row(static_cast<Eigen::Index>(i)) =
        T.row(ids[i]) + P.row(positions[i]) + S.row(segments[i]);
  }
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y),
              [this, tok, pos, seg, ids = std::move(ids),
               positions = std::move(positions), segments = std::move(segments),
               out]() {
                const Matrix& g = grad(out);
                Matrix& gt = grad_buf(tok);
                Matrix& gp = grad_buf(pos);
                Matrix& gs = grad_buf(seg);
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  const auto r = static_cast<Eigen::Index>(i);
                  gt.row(ids[i]) += g.row(r);
                  gp.row(positions[i]) += g.row(r);
                  gs.row(segments[i]) += g.row(r);
                }
              });
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  const Matrix& X = value(x);
  const Matrix& G = value(gamma);
  const Matrix& B = value(beta);
  require(G.rows() == 1 && G.cols() == X.cols(), "layer_norm: gamma must be 1xC");
  require(B.rows() == 1 && B.cols() == X.cols(), "layer_norm: beta must be 1xC");
  require(eps > 0.0, "layer_norm: eps must be positive");

  const auto n = X.rows();
  const auto d = X.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = ((X.row(r).array() - mu) * inv_std(r)).matrix();
  }
  Matrix y = xhat;
  y.array().rowwise() *= G.row(0).array();
  y.rowwise() += B.row(0);

  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y),
              [this, x, gamma, beta, xhat = std::move(xhat),
               inv_std = std::move(inv_std), out]() {
                const Matrix& g = grad(out);
                acc(beta, g.colwise().sum());
                acc(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
                const Matrix dxhat =
                    (g.array().rowwise() * value(gamma).row(0).array()).matrix();
                Matrix dx(g.rows(), g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const double m1 = dxhat.row(r).mean();
                  const double m2 =
                      (dxhat.row(r).array() * xhat.row(r).array()).mean();
                  dx.row(r) =
                      ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                       inv_std(r))
                          .matrix();
                }
                acc(x, dx);
              });
}

Tape::NodeId Tape::gelu(NodeId x) {
  const Matrix& X = value(x);
  Matrix y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double v = X(i);
    y(i) = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y), [this, x, out]() {
    const Matrix& g = grad(out);
    const Matrix& X = value(x);
    Matrix dx(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
      const double v = X(i);
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dx(i) = g(i) * (cdf + v * pdf);
    }
    acc(x, dx);
  });
}

Tape::NodeId Tape::dropout(NodeId x, Matrix mask) {
  const Matrix& X = value(x);
  require(mask.rows() == X.rows() && mask.cols() == X.cols(),
          "dropout: mask shape mismatch");
  const NodeId out = static_cast<NodeId>(nodes_.size());
  Matrix y = X.cwiseProduct(mask);
  return push(std::move(y), [this, x, mask = std::move(mask), out]() {
    acc(x, grad(out).cwiseProduct(mask));
  });
}

Tape::NodeId Tape::multi_head_attention(NodeId q, NodeId k, NodeId v,
                                        int n_heads,
                                        const std::vector<Matrix>* prob_dropout) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  const auto n = Q.rows();
  const auto d = Q.cols();
  require(K.rows() == n && K.cols() == d && V.rows() == n && V.cols() == d,
          "attention: Q/K/V shapes differ");
  require(n_heads > 0 && d % n_heads == 0,
          "attention: d_model must be divisible by n_heads");
  const auto dh = d / n_heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
  if (prob_dropout) {
    require(static_cast<int>(prob_dropout->size()) == n_heads,
            "attention: need one dropout mask per head");
  }

  std::vector<Matrix> probs(static_cast<std::size_t>(n_heads));
  std::vector<Matrix> masks;
  Matrix y(n, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * dh;
    const Matrix scores = Q.middleCols(off, dh) * K.middleCols(off, dh).transpose() * alpha;
    Matrix p = softmax_rows(scores);
    probs[static_cast<std::size_t>(h)] = p;
    if (prob_dropout) {
      const Matrix& m = (*prob_dropout)[static_cast<std::size_t>(h)];
      require(m.rows() == n && m.cols() == n,
              "attention: dropout mask must be n x n");
      p = p.cwiseProduct(m);
      masks.push_back(m);
    }
    y.middleCols(off, dh) = p * V.middleCols(off, dh);
  }

  const NodeId out = static_cast<NodeId>(nodes_.size());
  std::vector<Matrix> aux = probs;  // kept for inspection
  return push(
      std::move(y),
      [this, q, k, v, n_heads, dh, alpha, probs = std::move(probs),
       masks = std::move(masks), out]() {
        const Matrix& g = grad(out);
        const Matrix& Q = value(q);
        const Matrix& K = value(k);
        const Matrix& V = value(v);
        Matrix& gq = grad_buf(q);
        Matrix& gk = grad_buf(k);
        Matrix& gv = grad_buf(v);
        for (int h = 0; h < n_heads; ++h) {
          const auto off = static_cast<Eigen::Index>(h) * dh;
          const Matrix& p = probs[static_cast<std::size_t>(h)];
          Matrix pd = p;
          if (!masks.empty()) {
            pd = p.cwiseProduct(masks[static_cast<std::size_t>(h)]);
          }
          const Matrix d_out = g.middleCols(off, dh);
          gv.middleCols(off, dh) += pd.transpose() * d_out;
          Matrix dp = d_out * V.middleCols(off, dh).transpose();
          if (!masks.empty()) {
            dp = dp.cwiseProduct(masks[static_cast<std::size_t>(h)]);
          }
          // Softmax Jacobian, row-wise.
          Matrix ds(p.rows(), p.cols());
          for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const double dot = p.row(r).dot(dp.row(r));
            ds.row(r) = ((dp.row(r).array() - dot) * p.row(r).array()).matrix();
          }
          gq.middleCols(off, dh) += ds * K.middleCols(off, dh) * alpha;
          gk.middleCols(off, dh) += ds.transpose() * Q.middleCols(off, dh) * alpha;
        }
      },
      std::move(aux));
}

Tape::NodeId Tape::select_row(NodeId x, int row) {
  const Matrix& X = value(x);
  require(row >= 0 && row < X.rows(), "select_row: row out of range");
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(X.row(row),
              [this, x, row, out]() { grad_buf(x).row(row) += grad(out); });
}

Tape::NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const auto cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (NodeId p : parts) {
    require(value(p).cols() == cols, "concat_rows: column counts differ");
    rows += value(p).rows();
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  for (NodeId p : parts) {
    y.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y), [this, parts, out]() {
    const Matrix& g = grad(out);
    Eigen::Index off = 0;
    for (NodeId p : parts) {
      const auto r = value(p).rows();
      acc(p, g.middleRows(off, r));
      off += r;
    }
  });
}

Tape::NodeId Tape::row_normalize(NodeId x) {
  const Matrix& X = value(x);
  Eigen::VectorXd norms(X.rows());
  Matrix y(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    norms(r) = X.row(r).norm();
    if (norms(r) < 1e-12) {
      throw NumericalError("row_normalize: row " + std::to_string(r) +
                           " has near-zero norm");
    }
    y.row(r) = X.row(r) / norms(r);
  }
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(std::move(y), [this, x, norms = std::move(norms), out]() {
    const Matrix& g = grad(out);
    const Matrix& Y = value(out);
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = g.row(r).dot(Y.row(r));
      dx.row(r) = (g.row(r) - dot * Y.row(r)) / norms(r);
    }
    acc(x, dx);
  });
}

Tape::NodeId Tape::ce_rows_mean(NodeId logits, std::vector<int> labels) {
  const Matrix& L = value(logits);
  require(static_cast<Eigen::Index>(labels.size()) == L.rows(),
          "ce_rows_mean: one label per row required");
  double loss = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < L.cols(), "ce_rows_mean: label out of range");
    loss += log_sum_exp(L.row(r)) - L(r, y);
  }
  loss /= static_cast<double>(L.rows());
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(Matrix::Constant(1, 1, loss),
              [this, logits, labels = std::move(labels), out]() {
                const double g = grad(out)(0, 0);
                const Matrix& L = value(logits);
                const Matrix p = softmax_rows(L);
                Matrix dl = p;
                for (Eigen::Index r = 0; r < L.rows(); ++r) {
                  dl(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
                }
                acc(logits, dl * (g / static_cast<double>(L.rows())));
              });
}

Tape::NodeId Tape::ce_sum(NodeId logits, std::vector<int> rows,
                          std::vector<int> labels) {
  const Matrix& L = value(logits);
  require(rows.size() == labels.size(), "ce_sum: rows/labels length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    const int y = labels[i];
    require(r >= 0 && r < L.rows(), "ce_sum: row out of range");
    require(y >= 0 && y < L.cols(), "ce_sum: label out of range");
    loss += log_sum_exp(L.row(r)) - L(r, y);
  }
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(Matrix::Constant(1, 1, loss),
              [this, logits, rows = std::move(rows), labels = std::move(labels),
               out]() {
                const double g = grad(out)(0, 0);
                const Matrix& L = value(logits);
                Matrix& gl = grad_buf(logits);
                for (std::size_t i = 0; i < rows.size(); ++i) {
                  const int r = rows[i];
                  const double m = L.row(r).maxCoeff();
                  Eigen::RowVectorXd p = (L.row(r).array() - m).exp().matrix();
                  p /= p.sum();
                  p(labels[i]) -= 1.0;
                  gl.row(r) += g * p;
                }
              });
}

Tape::NodeId Tape::mse(NodeId a, NodeId b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mse: shape mismatch");
  const double n = static_cast<double>(A.size());
  const double loss = (A - B).squaredNorm() / n;
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(Matrix::Constant(1, 1, loss), [this, a, b, n, out]() {
    const double g = grad(out)(0, 0);
    const Matrix diff = (value(a) - value(b)) * (2.0 * g / n);
    acc(a, diff);
    acc(b, -diff);
  });
}

Tape::NodeId Tape::rowwise_dot_mean(NodeId a, NodeId b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(),
          "rowwise_dot_mean: shape mismatch");
  const double n = static_cast<double>(A.rows());
  const double v = A.cwiseProduct(B).sum() / n;
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(Matrix::Constant(1, 1, v), [this, a, b, n, out]() {
    const double g = grad(out)(0, 0);
    acc(a, value(b) * (g / n));
    acc(b, value(a) * (g / n));
  });
}

Tape::NodeId Tape::weighted_sum(NodeId x, Matrix weights) {
  const Matrix& X = value(x);
  require(weights.rows() == X.rows() && weights.cols() == X.cols(),
          "weighted_sum: weight shape mismatch");
  const double v = X.cwiseProduct(weights).sum();
  const NodeId out = static_cast<NodeId>(nodes_.size());
  return push(Matrix::Constant(1, 1, v),
              [this, x, weights = std::move(weights), out]() {
                acc(x, weights * grad(out)(0, 0));
              });
}

}  // namespace bepa::numerics
