#include "bepa/objective.hpp"

#include <numeric>

#include "bepa/errors.hpp"

namespace bepa::objective {

AlignmentLoss alignment_loss_from_string(const std::string& name) {
  if (name == "info_nce") return AlignmentLoss::kInfoNce;
  if (name == "mse") return AlignmentLoss::kMse;
  if (name == "cosine") return AlignmentLoss::kCosine;
  throw ConfigError("unknown alignment loss: " + name);
}

std::string to_string(AlignmentLoss loss) {
  switch (loss) {
    case AlignmentLoss::kInfoNce: return "info_nce";
    case AlignmentLoss::kMse: return "mse";
    case AlignmentLoss::kCosine: return "cosine";
  }
  throw InvalidArgument("unhandled alignment loss");
}

Tape::NodeId mlm_loss(Tape& tape,
                      const std::vector<Tape::NodeId>& per_example_ce_sums,
                      std::size_t total_labels) {
  if (per_example_ce_sums.empty())
    throw InvalidArgument("mlm_loss needs at least one example");
  if (total_labels == 0)
    throw InvalidArgument("mlm_loss needs at least one labeled position");
  Tape::NodeId total = per_example_ce_sums[0];
  for (std::size_t i = 1; i < per_example_ce_sums.size(); ++i)
    total = tape.add(total, per_example_ce_sums[i]);
  return tape.scale(total, 1.0 / static_cast<double>(total_labels));
}

namespace {

void check_pair_shapes(const Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b) {
  const Matrix& a = tape.value(z_a);
  const Matrix& b = tape.value(z_b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument("paired embeddings must share a shape");
  if (a.rows() < 1) throw InvalidArgument("empty embedding batch");
}

}  // namespace

Tape::NodeId info_nce(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b,
                      double temperature) {
  check_pair_shapes(tape, z_a, z_b);
  if (!(temperature > 0.0))
    throw InvalidArgument("temperature must be positive");
  const Eigen::Index batch = tape.value(z_a).rows();

  Tape::NodeId na = tape.row_normalize(z_a);
  Tape::NodeId nb = tape.row_normalize(z_b);
  Tape::NodeId scores = tape.scale(tape.matmul_nt(na, nb), 1.0 / temperature);

  std::vector<int> labels(static_cast<std::size_t>(batch));
  std::iota(labels.begin(), labels.end(), 0);
  Tape::NodeId a_to_b = tape.ce_rows_mean(scores, labels);
  Tape::NodeId b_to_a = tape.ce_rows_mean(tape.transpose(scores), labels);
  return tape.scale(tape.add(a_to_b, b_to_a), 0.5);
}

Tape::NodeId mse_alignment(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b) {
  check_pair_shapes(tape, z_a, z_b);
  return tape.mse(z_a, z_b);
}

Tape::NodeId cosine_alignment(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b) {
  check_pair_shapes(tape, z_a, z_b);
  Tape::NodeId mean_cos = tape.rowwise_dot_mean(tape.row_normalize(z_a),
                                                tape.row_normalize(z_b));
  return tape.add_const(tape.scale(mean_cos, -1.0), 1.0);
}

Tape::NodeId alignment(Tape& tape, AlignmentLoss loss, Tape::NodeId z_a,
                       Tape::NodeId z_b, double temperature) {
  switch (loss) {
    case AlignmentLoss::kInfoNce: return info_nce(tape, z_a, z_b, temperature);
    case AlignmentLoss::kMse: return mse_alignment(tape, z_a, z_b);
    case AlignmentLoss::kCosine: return cosine_alignment(tape, z_a, z_b);
  }
  throw InvalidArgument("unhandled alignment loss");
}

namespace {

double eval_pair(AlignmentLoss loss, const Matrix& z_a, const Matrix& z_b,
                 double temperature) {
  Tape tape;
  Tape::NodeId a = tape.leaf(z_a);
  Tape::NodeId b = tape.leaf(z_b);
  return tape.value(alignment(tape, loss, a, b, temperature))(0, 0);
}

}  // namespace

double info_nce_value(const Matrix& z_a, const Matrix& z_b,
                      double temperature) {
  return eval_pair(AlignmentLoss::kInfoNce, z_a, z_b, temperature);
}

double mse_alignment_value(const Matrix& z_a, const Matrix& z_b) {
  return eval_pair(AlignmentLoss::kMse, z_a, z_b, 1.0);
}

double cosine_alignment_value(const Matrix& z_a, const Matrix& z_b) {
  return eval_pair(AlignmentLoss::kCosine, z_a, z_b, 1.0);
}

double alignment_value(AlignmentLoss loss, const Matrix& z_a,
                       const Matrix& z_b, double temperature) {
  return eval_pair(loss, z_a, z_b, temperature);
}

}  // namespace bepa::objective
