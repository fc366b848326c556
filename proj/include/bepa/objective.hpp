#pragma once

#include <string>
#include <vector>

#include "bepa/tape.hpp"

namespace bepa::objective {

using numerics::Matrix;
using numerics::Tape;

enum class AlignmentLoss { kInfoNce, kMse, kCosine };

AlignmentLoss alignment_loss_from_string(const std::string& name);
std::string to_string(AlignmentLoss loss);

// Batch MLM loss: mean cross-entropy over every labeled position in the
// batch. Each element of per_example_ce_sums is a ce_sum node over one
// example's labeled rows; total_labels is the batch-wide label count.
Tape::NodeId mlm_loss(Tape& tape,
                      const std::vector<Tape::NodeId>& per_example_ce_sums,
                      std::size_t total_labels);

// Symmetric in-batch InfoNCE over paired embedding matrices [B x d]:
// s_ij = cos(z_a_i, z_b_j) / temperature, and the loss averages the
// cross-entropy of row i against target i over both matching directions.
Tape::NodeId info_nce(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b,
                      double temperature);

// Mean squared error over all entries of the paired embeddings.
Tape::NodeId mse_alignment(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b);

// One minus the mean row-wise cosine similarity.
Tape::NodeId cosine_alignment(Tape& tape, Tape::NodeId z_a, Tape::NodeId z_b);

Tape::NodeId alignment(Tape& tape, AlignmentLoss loss, Tape::NodeId z_a,
                       Tape::NodeId z_b, double temperature);

// Evaluation-mode values, routed through the same graph builders.
double info_nce_value(const Matrix& z_a, const Matrix& z_b, double temperature);
double mse_alignment_value(const Matrix& z_a, const Matrix& z_b);
double cosine_alignment_value(const Matrix& z_a, const Matrix& z_b);
double alignment_value(AlignmentLoss loss, const Matrix& z_a,
                       const Matrix& z_b, double temperature);

}  // namespace bepa::objective
