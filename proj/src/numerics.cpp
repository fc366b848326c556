#include "bepa/numerics.hpp"

#include <cmath>

#include "bepa/errors.hpp"

namespace bepa::numerics {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw InvalidArgument("softmax: empty input");
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

Eigen::VectorXd layer_norm(const Eigen::VectorXd& x,
                           const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps) {
  if (x.size() == 0) throw InvalidArgument("layer_norm: empty input");
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    throw InvalidArgument("layer_norm: gamma/beta size mismatch");
  }
  if (eps <= 0.0) throw InvalidArgument("layer_norm: eps must be positive");
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const Eigen::ArrayXd xhat = (x.array() - mu) / std::sqrt(var + eps);
  return (xhat * gamma.array() + beta.array()).matrix();
}

double grad_check(const std::function<double(const Params&)>& f,
                  const std::function<Params(const Params&)>& analytic_grad,
                  const Params& point, double fd_step) {
  if (fd_step <= 0.0) throw InvalidArgument("grad_check: fd_step must be positive");

  const Params analytic = analytic_grad(point);
  if (analytic.size() != point.size()) {
    throw InvalidArgument("grad_check: gradient count differs from parameters");
  }
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (analytic[i].rows() != point[i].rows() ||
        analytic[i].cols() != point[i].cols()) {
      throw InvalidArgument("grad_check: gradient shape differs from parameter");
    }
    if (!analytic[i].allFinite()) {
      throw NumericalError("grad_check: analytic gradient is not finite");
    }
  }

  double max_rel = 0.0;
  Params probe = point;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (Eigen::Index j = 0; j < probe[i].size(); ++j) {
      const double orig = probe[i](j);
      probe[i](j) = orig + fd_step;
      const double up = f(probe);
      probe[i](j) = orig - fd_step;
      const double down = f(probe);
      probe[i](j) = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("grad_check: objective is not finite");
      }
      const double numeric = (up - down) / (2.0 * fd_step);
      const double a = analytic[i](j);
      const double rel =
          std::abs(a - numeric) /
          std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace bepa::numerics
