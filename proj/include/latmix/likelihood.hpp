#pragma once

#include <optional>
#include <vector>

#include "latmix/model.hpp"
#include "latmix/quadrature.hpp"

namespace latmix {

/// Per-evaluation state derived from theta.
struct EvalContext {
  const ValidatedModel* model = nullptr;
  ModelParams par;
  std::vector<Mat> b_class;                  // omega_g^2 B
  std::vector<Mat> u_class;                  // omega_g U with B_g = u' u (ordinal only)
  std::vector<std::vector<double>> cuts;     // thresholds per marker
  QuadratureRule gh;
  bool shared_cov = true;                    // V_g identical across classes
};

/// Empty when theta is outside the admissible region (e.g. a nonpositive
/// linear-link scale).
std::optional<EvalContext> make_context(const ValidatedModel& m, const Vec& theta);

/// Transformed outcomes of a subject, stacked marker-major.
struct Transformed {
  Vec y;
  double log_jac = 0.0;
};
std::optional<Transformed> transform_outcomes(const EvalContext& ctx, const SubjectData& s);

/// Mean of the stacked (transformed) outcomes in class g.
Vec class_mean(const EvalContext& ctx, const SubjectData& s, int g);
/// Covariance Z B_g Z' + R + Sigma* of the stacked outcomes in class g.
Mat class_cov(const EvalContext& ctx, const SubjectData& s, int g);
/// Stacked random-effect design rows.
Mat stacked_z(const SubjectData& s);

struct HazardValue {
  double lambda;
  double cum;
};
/// Cause-p hazard and cumulative hazard at t for class g.
HazardValue cause_hazard(const EvalContext& ctx, const SubjectData& s, int g, int p, double t);
/// Sum over causes of the cumulative hazards at t in class g.
double total_cumulative(const EvalContext& ctx, const SubjectData& s, int g, double t);

/// Class-wise log components of one subject.
struct SubjectTerms {
  Vec log_prior;   // log pi_g
  Vec log_long;    // longitudinal log density (with Jacobian)
  Vec log_surv;    // -sum A_p(T) + log lambda_E(T), zero without survival
  double log_entry = 0.0;  // log sum_g pi_g exp(-sum A_p(T0)), zero without entry
};

std::optional<SubjectTerms> subject_terms(const EvalContext& ctx, const SubjectData& s);
/// Longitudinal log density in class g, NaN on failure.
double class_log_density(const EvalContext& ctx, const SubjectData& s, int g);
double subject_loglik(const SubjectTerms& t);

/// Sum of subject contributions in subject order; NaN on any failure.
double total_loglik(const ValidatedModel& m, const Vec& theta, int threads = 1);
/// Per-subject contributions (NaN entries mark failures).
std::vector<double> subject_logliks(const ValidatedModel& m, const Vec& theta, int threads = 1);

}  // namespace latmix
