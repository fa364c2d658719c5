#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latmix/model.hpp"
#include "latmix/optimizer.hpp"

namespace latmix {

struct FitOptions {
  ConvergenceSettings conv{1e-4, 1e-4, 1e-4, 0};  // maxiter 0: family default
  std::vector<bool> mask;                          // empty: all free
  int threads = 1;
};

struct FittedModel {
  std::shared_ptr<const ValidatedModel> model;
  Vec theta;
  std::vector<bool> mask;
  OptResult opt;
  ConvergenceSettings conv;  // thresholds and iteration cap used
  std::vector<double> grid_logliks;  // interim values of a grid search
  std::vector<std::string> notes;

  double loglik() const { return opt.loglik; }
  int n_free() const;
  double aic() const { return -2.0 * loglik() + 2.0 * n_free(); }
  double bic() const;
  bool has_cov() const { return opt.covariance.has_value(); }
  const Mat& cov() const { return *opt.covariance; }
  /// Standard errors; 0 for masked coordinates, NaN without a covariance.
  Vec se() const;
  bool is_free(int v) const { return mask.empty() || mask[v]; }
};

/// Log-likelihood objective over theta, evaluated single-threaded.
ObjectiveFn make_objective(std::shared_ptr<const ValidatedModel> m);

FittedModel fit_model(std::shared_ptr<const ValidatedModel> m, const Vec& theta0,
                      const FitOptions& opts);

/// Default starting values; class-specific entries repeat the one-class value.
Vec init_default(const ValidatedModel& m, std::vector<std::string>* notes = nullptr);

/// theta_g = theta_hat + (g - (G+1)/2) SE for class-specific parameters,
/// common ones copied, xi = 0, omega = 1, PH offsets g/2.
Vec init_from_lower(const ValidatedModel& target, const FittedModel& lower,
                    std::vector<std::string>* notes = nullptr);

/// Class-specific parameters drawn per class from N(theta_hat, V_hat).
Vec init_random(const ValidatedModel& target, const FittedModel& lower, std::uint64_t seed,
                std::uint64_t stream, std::vector<std::string>* notes = nullptr);

/// rep short runs of at most m iterations from random draws; the best
/// (lowest replicate on ties) is then run to convergence.
FittedModel gridsearch(std::shared_ptr<const ValidatedModel> target, const FittedModel& lower,
                       int rep, int m, std::uint64_t seed, const FitOptions& opts);

/// One-class companion of a spec: no mixture, classmb, nwg, or class-specific
/// survival effects.
ModelSpec one_class_spec(const ModelSpec& s);

}  // namespace latmix
