#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "bepa/tape.hpp"

namespace bepa::numerics {

// Numerically stable softmax over a logit vector (max subtraction).
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Layer normalization of one feature vector with learned gain and bias.
// Uses the biased variance, matching the tape op.
Eigen::VectorXd layer_norm(const Eigen::VectorXd& x,
                           const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps = 1e-5);

using Params = std::vector<Matrix>;

// Central-difference gradient check. f evaluates the scalar objective at a
// parameter set; analytic_grad produces the gradients under test (one matrix
// per parameter, same shapes). The finite-difference side only ever calls f
// on perturbed copies, so it is independent of how analytic_grad is computed.
// Returns the maximum relative error |a - n| / max(1, |a|, |n|) over all
// parameter entries. Throws NumericalError if any evaluation is non-finite.
double grad_check(const std::function<double(const Params&)>& f,
                  const std::function<Params(const Params&)>& analytic_grad,
                  const Params& point, double fd_step = 1e-5);

}  // namespace bepa::numerics
