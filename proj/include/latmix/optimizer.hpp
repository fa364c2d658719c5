#pragma once

#include <optional>
#include <string>
#include <vector>

#include "latmix/numerics.hpp"

namespace latmix {

struct ConvergenceSettings {
  double eps_a = 1e-4;  // parameters
  double eps_b = 1e-4;  // log-likelihood
  double eps_d = 1e-4;  // relative distance to the maximum
  int maxiter = 100;
};

enum class OptStatus { Converged, MaxIter, Failed };
std::string to_string(OptStatus s);

struct OptResult {
  Vec theta;
  double loglik = 0.0;
  int iterations = 0;
  double crit_params = 0.0;
  double crit_loglik = 0.0;
  double crit_deriv = 0.0;
  OptStatus status = OptStatus::Failed;
  std::string message;
  bool deriv_inflated = false;  // derivative criterion used the inflated Hessian
  Mat hessian;                  // of -L at theta, zero on masked coordinates
  std::optional<Mat> covariance;  // inverse Hessian, zero on masked coordinates
  std::vector<double> trace;    // log-likelihood after each accepted step

  bool converged() const { return status == OptStatus::Converged; }
};

/// Diagonal inflation H_ii + lambda[(1-eta)|H_ii| + eta*T] with T = |tr(H)|
/// (sum |H_ii| when the trace vanishes, 1 when that vanishes too).
Mat inflate_once(const Mat& h, double lambda, double eta);

/// Inflation schedule: lambda and eta start at 0.01, shrink tenfold after a
/// positive-definite result and grow tenfold otherwise.
struct Inflation {
  double lambda = 0.01;
  double eta = 0.01;

  /// Returns h unchanged when PD, else the first PD inflation; empty when
  /// lambda exceeds its cap.
  std::optional<Mat> make_pd(const Mat& h);
  void escalate();
};

/// Maximizes f over the coordinates with mask true (empty mask: all free).
/// Throws when f is not finite at theta0.
OptResult marquardt_maximize(const ObjectiveFn& f, const Vec& theta0, const std::vector<bool>& mask,
                             const ConvergenceSettings& settings, int threads = 1);

/// Inverse of the free block of h, embedded with zeros; empty when singular.
std::optional<Mat> covariance_from_hessian(const Mat& h, const std::vector<bool>& mask);

}  // namespace latmix
