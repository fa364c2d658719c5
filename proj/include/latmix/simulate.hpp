#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "latmix/model.hpp"

namespace latmix {

struct CovariateGen {
  enum class Kind { Binary, Normal, Uniform };
  std::string name;
  Kind kind = Kind::Binary;
  double a = 0.5;  // Binary: P(1); Normal: mean; Uniform: lower
  double b = 1.0;  // Normal: sd; Uniform: upper
};

struct SimDesign {
  int n_subjects = 100;
  std::vector<double> visits{0, 1, 2, 3, 4, 5};
  double jitter = 0.0;  // visits after the first move uniformly by +-jitter
  std::vector<CovariateGen> covariates;  // subject-level
  double censor_time = std::numeric_limits<double>::infinity();
  double censor_rate = 0.0;  // exponential random censoring
  std::uint64_t seed = 1;
};

/// Subject/visit/covariate table for the columns a spec refers to. Outcomes
/// hold standard normal placeholders and survival columns a censoring time one
/// unit after the last visit, so a template model can be built from it.
DataTable simulate_skeleton(const ModelSpec& spec, const SimDesign& d);

/**
 * Draws outcomes (and survival data for joint models) from the model at theta
 * using the covariates of `skeleton`. Links and hazard knots come from the
 * template model `m`. For joint models visits after the event time are
 * dropped. Subject i draws from the stream (seed, i).
 */
DataTable simulate_outcomes(const ValidatedModel& m, const Vec& theta, const DataTable& skeleton,
                            std::uint64_t seed, double censor_time = std::numeric_limits<double>::infinity(),
                            double censor_rate = 0.0, std::vector<int>* classes = nullptr);

DataTable simulate(const ValidatedModel& m, const Vec& theta, const SimDesign& d,
                   std::vector<int>* classes = nullptr);

/// Event time with all-cause cumulative hazard cum(t) = target, by bisection
/// on [lo, hi]; returns hi when cum(hi) < target.
double invert_cumulative(const std::function<double(double)>& cum, double target, double lo, double hi);

}  // namespace latmix
