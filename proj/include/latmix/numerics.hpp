#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace latmix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Standard normal distribution.
double normal_cdf(double x);
double normal_logpdf(double x);
double normal_quantile(double p);

/// Lower Cholesky factor of a symmetric positive-definite matrix.
struct CholeskyFactor {
  Mat lower;
  double log_det = 0.0;  // log det of the factored matrix

  int dim() const { return static_cast<int>(lower.rows()); }
  Vec solve(const Vec& b) const;
  Mat reconstruct() const { return lower * lower.transpose(); }
};

/// Empty when the matrix is not (numerically) positive definite.
std::optional<CholeskyFactor> cholesky(const Mat& a);

/// A square root L with L L' = a: the Cholesky factor, or the eigen square
/// root of the nonnegative part when a is only semidefinite.
Mat psd_sqrt(const Mat& a);

/// log N(y; mu, v). Empty when v is not positive definite.
std::optional<double> mvn_logdensity(const Vec& y, const Vec& mu, const Mat& v);
double mvn_logdensity(const Vec& y, const Vec& mu, const CholeskyFactor& v);

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// partition. Callers write into pre-sized slots, so results never depend on
/// scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

using ObjectiveFn = std::function<double(const Vec&)>;

/// Finite-difference step for one coordinate: max(1e-7, 1e-4 |x|).
double fd_step(double x);

/// Central differences, probes at theta +- h. Masked coordinates (mask[v] ==
/// false) get 0. Empty when any probe is non-finite.
std::optional<Vec> fd_gradient(const ObjectiveFn& f, const Vec& theta,
                               const std::vector<bool>& mask, int threads = 1);

/// Forward second differences with the same steps, symmetrized. Rows and
/// columns of masked coordinates are zero. `f0` is f(theta) when known.
std::optional<Mat> fd_hessian(const ObjectiveFn& f, const Vec& theta,
                              const std::vector<bool>& mask, int threads = 1,
                              std::optional<double> f0 = std::nullopt);

/// Gradient and Hessian sharing the f(theta + h e_v) probes.
struct Derivatives {
  Vec gradient;
  Mat hessian;
};
std::optional<Derivatives> fd_derivatives(const ObjectiveFn& f, const Vec& theta,
                                          const std::vector<bool>& mask,
                                          double f0, int threads = 1);

/**
 * Counter-based random numbers: every draw is a pure function of
 * (seed, stream, counter), obtained by SplitMix64 finalization of the mixed
 * triple. Draws can therefore be generated in any order or on any thread.
 */
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in (0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal by Box-Muller on counters (2k, 2k+1).
  double normal(std::uint64_t k) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Sequential convenience wrapper over a CounterRng.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}
  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(next_++); }
  int categorical(std::span<const double> probs);

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// log(sum(exp(v))) with a max shift.
double log_sum_exp(std::span<const double> v);

/// Empirical quantile, linear interpolation between order statistics
/// (R's type 7). `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);

}  // namespace latmix
