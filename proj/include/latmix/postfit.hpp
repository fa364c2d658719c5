#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "latmix/fit.hpp"
#include "latmix/likelihood.hpp"

namespace latmix {

/// Index of the largest entry, lowest index on ties.
int argmax_lowest(const Vec& v);

struct PosteriorTable {
  std::vector<std::string> ids;
  Mat prob;                    // subjects x G; for joint fits uses Y and T
  std::vector<int> cls;        // 0-based assigned class
  std::optional<Mat> prob_y;   // joint fits: longitudinal data only
  std::vector<int> cls_y;
};

PosteriorTable posterior_probs(const ValidatedModel& m, const Vec& theta, int threads = 1);
PosteriorTable posterior_probs(const FittedModel& fm, int threads = 1);

struct PostprobSummary {
  static constexpr double thresholds[3] = {0.7, 0.8, 0.9};
  std::vector<int> counts;  // subjects per assigned class
  Vec proportions;          // percent per assigned class
  Mat table;                // G x G mean posterior probabilities, NaN rows for empty classes
  Mat above;                // G x 3 percent with max probability above each threshold
};

PostprobSummary postprob_summary(const Mat& prob, const std::vector<int>& cls);

struct EmpiricalBayes {
  std::vector<Mat> u_class;  // per subject: q x G
  Mat u;                     // subjects x q, posterior weighted
};

/// Continuous outcomes only; thresholds links throw.
EmpiricalBayes empirical_bayes(const ValidatedModel& m, const Vec& theta, int threads = 1);

struct ObsPrediction {
  int subject = 0;
  int marker = 0;
  double time = 0.0;
  double obs = 0.0;      // transformed outcome for link-function fits
  Vec pred_m_class;      // per class, marginal
  Vec pred_ss_class;     // per class, subject-specific
  double pred_m = 0.0;   // weighted by prior class probabilities
  double pred_ss = 0.0;  // weighted by posterior (longitudinal) probabilities
  double res_m() const { return obs - pred_m; }
  double res_ss() const { return obs - pred_ss; }
};

std::vector<ObsPrediction> predictions_residuals(const ValidatedModel& m, const Vec& theta,
                                                 int threads = 1);

/// Covariate values of new data rows; missing covariates throw. Without
/// need_time the longitudinal covariates are optional.
struct ProfileRow {
  double time = 0.0;
  double cor_time = 0.0;
  Vec x_fixed, z, x_contrast;
  std::optional<Vec> x_class;  // when every class-membership covariate is present
  std::optional<Vec> x_surv;   // when every survival covariate is present
};

std::vector<ProfileRow> profile_rows(const ValidatedModel& m, const DataTable& data, bool need_time = true);

enum class Scale { Latent, Outcome };
enum class Integration { MonteCarlo, GaussHermite };

struct PredictOptions {
  Scale scale = Scale::Latent;
  Integration integration = Integration::MonteCarlo;
  int mc_samples = 2000;  // antithetic pairs use half as many normals
  int draws = 0;          // parameter draws for percentile bands
  std::uint64_t seed = 1;
  int threads = 1;
};

struct Band {
  double value = 0.0;  // at the estimates
  double lower = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
};

struct TrajectoryPoint {
  int row = 0;
  double time = 0.0;
  int marker = -1;  // -1 on the latent scale
  int cls = 0;      // -1: weighted by class-membership probabilities
  Band band;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  bool correlation_neglected = false;  // Gauss-Hermite integration on the outcome scale
};

Trajectory predict_trajectory(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov,
                              const DataTable& newdata, const PredictOptions& opts);

/// E[H(mean + sqrt(var) Z)] for one marker.
double expected_outcome(const LinkFamily& f, const Vec& eta, double mean, double var,
                        Integration integ, int mc_samples, const CounterRng& rng);

struct OutcomeFit {
  int subject = 0;
  int marker = 0;
  double time = 0.0;
  double obs = 0.0;
  double pred = 0.0;
};

/// Marginal predictions in the outcome scale for every observation.
std::vector<OutcomeFit> fit_outcome_scale(const ValidatedModel& m, const Vec& theta,
                                          const PredictOptions& opts);

struct LinkPoint {
  int marker = 0;
  double y = 0.0;
  Band band;
};

/// H^{-1} on nsim equidistant outcome values per marker (or the given grid).
std::vector<LinkPoint> predict_link(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov,
                                    int nsim, int draws, std::uint64_t seed,
                                    const std::vector<std::vector<double>>& grid = {});

struct VarExplained {
  int row = 0;
  double time = 0.0;
  int cls = 0;
  int marker = 0;
  double percent = 0.0;
};

std::vector<VarExplained> var_explained(const ValidatedModel& m, const Vec& theta, const DataTable& at);

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Tests C theta = c0 with W = r'(C V C')^{-1} r; throws when C V C' is singular.
WaldResult wald_test(const Vec& theta, const Mat& cov, const Mat& c, const Vec& c0 = Vec());

struct CoefRow {
  std::string name;
  double value = 0.0;
  double se = 0.0;  // NaN when unavailable
  double z = 0.0;
  double p = 0.0;
  bool free = true;
};

std::vector<CoefRow> coefficient_table(const FittedModel& fm);

struct VarcovEntry {
  int i = 0, j = 0;
  double value = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 0.0;
};

/// Entries of B (upper triangle) with delta-method standard errors.
std::vector<VarcovEntry> varcov_re(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov);

/// Probability of a cause-p event in (a, b] for class g given survival to a
/// (unnormalized: integral of lambda_p S over (a, b]).
double cause_incidence(const EvalContext& ctx, const SubjectData& s, int g, int p, double a, double b);

struct IncidencePoint {
  double time = 0.0;
  int cause = 0;
  int cls = 0;  // -1 marginal
  Band band;
};

/// Cumulative incidences from the start of the hazard support for one
/// covariate profile (first row of `profile`).
std::vector<IncidencePoint> cumulative_incidence(const ValidatedModel& m, const Vec& theta,
                                                 const std::optional<Mat>& cov, const DataTable& profile,
                                                 const std::vector<double>& times, int draws,
                                                 std::uint64_t seed, int threads = 1);

struct DynPrediction {
  std::string id;
  double landmark = 0.0;
  double horizon = 0.0;
  int cause = 0;
  Band band;
};

/// P(cause-p event in (s, s+t] | T > s, history up to s) per subject of
/// `history`, landmark s and horizon t.
std::vector<DynPrediction> dynamic_prediction(const ValidatedModel& m, const Vec& theta,
                                              const std::optional<Mat>& cov, const DataTable& history,
                                              const std::vector<double>& landmarks,
                                              const std::vector<double>& horizons, int draws,
                                              std::uint64_t seed, int threads = 1);

/// Probability for one subject at the given parameters; NaN on failure.
double dynamic_probability(const EvalContext& ctx, const SubjectData& s, double landmark,
                           double horizon, int cause);

/// theta_d = theta + L z_d with L L' = cov; draw d uses stream (seed, d).
std::vector<Vec> draw_parameters(const Vec& theta, const Mat& cov, int draws, std::uint64_t seed);

}  // namespace latmix
