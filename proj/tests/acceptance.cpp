// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Arguments select a subset of criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "helpers.hpp"
#include "latmix/basis.hpp"
#include "latmix/fit.hpp"
#include "latmix/hazards.hpp"
#include "latmix/io.hpp"
#include "latmix/postfit.hpp"
#include "latmix/quadrature.hpp"
#include "latmix/simulate.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace latmix;
using namespace testing_util;

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[" << what << "] ";
    }
  }
};

std::string fmt(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", x);
  return b;
}

std::shared_ptr<const ValidatedModel> try_build(const ModelSpec& s, const DataTable& d) {
  try {
    return validate_and_build(s, d);
  } catch (const Error&) {
    return nullptr;
  }
}

// ---------------------------------------------------------------- criterion 1

void parameter_counts(Verdict& v) {
  const auto t0 = clock_type::now();
  const auto d = cohort_like(80, 3);
  const std::vector<std::pair<std::string, int>> files{
      {"hlme_quadratic.json", 13},  {"lcmm_quant_splines.json", 13}, {"joint_weibull_1.json", 15},
      {"joint_weibull_2.json", 21}, {"joint_weibull_3.json", 27},    {"joint_weibull_4.json", 33}};
  for (const auto& [f, expect] : files) {
    const int n = validate_and_build(read_spec(std::string(LATMIX_TEST_DATA) + "/" + f), d)->layout.size();
    v.detail << f << "=" << n << " ";
    v.require(n == expect, f + " expected " + std::to_string(expect));
  }
  const double secs = since(t0);
  v.detail << fmt(secs) << " s";
  v.require(secs < 1.0, "runtime");
}

// ---------------------------------------------------------------- criterion 2

void oracle_equivalence(Verdict& v) {
  const auto t0 = clock_type::now();
  const std::vector<std::pair<std::string, std::function<Instance(std::mt19937_64&)>>> families{
      {"hlme", random_hlme}, {"lcmm", random_lcmm}, {"multlcmm", random_multlcmm}, {"jointlcmm", random_joint}};
  std::uint64_t seed = 200;
  for (const auto& [name, make] : families) {
    std::mt19937_64 gen(++seed);
    int done = 0, ordinal = 0, attempts = 0;
    double worst = 0.0, worst_ord = 0.0;
    while (done < 200 && attempts < 4000) {
      ++attempts;
      const auto in = make(gen);
      const auto m = try_build(in.spec, in.data);
      if (!m) continue;
      const Vec th = random_theta(*m, gen);
      const double ref = oracle::SubjectOracle{*m, unpack(m->st, m->layout, th)}.total();
      if (!std::isfinite(ref)) continue;
      const double lib = total_loglik(*m, th);
      const double err = std::isfinite(lib) ? std::abs(lib - ref) : INFINITY;
      if (m->st.ordinal()) {
        worst_ord = std::max(worst_ord, err);
        ++ordinal;
      } else {
        worst = std::max(worst, err);
      }
      ++done;
    }
    v.detail << name << " n=" << done << " max|diff|=" << fmt(worst);
    if (ordinal) v.detail << " ordinal n=" << ordinal << " max|diff|=" << fmt(worst_ord);
    v.detail << "; ";
    v.require(done == 200, name + " instances");
    v.require(worst <= 1e-8, name + " tolerance");
    v.require(worst_ord <= 1e-6, name + " ordinal tolerance");
  }
  const double secs = since(t0);
  v.detail << fmt(secs) << " s";
  v.require(secs < 60.0, "runtime");
}

// ---------------------------------------------------------------- criterion 3

// theta of a two-class model whose classes both equal the one-class theta1
Vec duplicate_classes(const ValidatedModel& m1, const Vec& theta1, const ValidatedModel& m2, std::mt19937_64& gen) {
  std::map<std::string, int> index;
  for (int i = 0; i < m1.layout.size(); ++i) index[slot_key(m1.st, m1.layout.slots[i])] = i;
  std::normal_distribution<double> nrm(0.0, 0.7);
  Vec th(m2.layout.size());
  for (int i = 0; i < m2.layout.size(); ++i) {
    const Slot& s = m2.layout.slots[i];
    const auto it = index.find(slot_key(m2.st, s));
    if (s.block == Block::Classmb) th[i] = nrm(gen);
    else if (s.block == Block::Omega) th[i] = 1.0;
    else if (s.block == Block::PhOffset) th[i] = 0.0;
    else if (it != index.end()) th[i] = theta1[it->second];
    else if (s.block == Block::Mixture) th[i] = 0.0;  // constrained intercept of the first class
    else throw Error("no one-class counterpart for " + s.name);
  }
  return th;
}

void mixture_collapse(Verdict& v) {
  const std::vector<std::pair<std::string, std::function<Instance(std::mt19937_64&)>>> families{
      {"hlme", random_hlme}, {"lcmm", random_lcmm}, {"multlcmm", random_multlcmm}, {"jointlcmm", random_joint}};
  std::uint64_t seed = 300;
  for (const auto& [name, make] : families) {
    std::mt19937_64 gen(++seed);
    int done = 0;
    double worst = 0.0;
    for (int attempt = 0; attempt < 2000 && done < 50; ++attempt) {
      auto in = make(gen);
      ModelSpec s2 = in.spec;
      s2.ng = 2;
      if (s2.mixture.empty()) s2.mixture = terms({"t"});
      if (s2.random.empty()) s2.nwg = false;
      const auto m2 = try_build(s2, in.data);
      const auto m1 = try_build(one_class_spec(s2), in.data);
      if (!m1 || !m2) continue;
      const Vec th1 = random_theta(*m1, gen);
      const double l1 = total_loglik(*m1, th1);
      if (!std::isfinite(l1)) continue;
      const double l2 = total_loglik(*m2, duplicate_classes(*m1, th1, *m2, gen));
      worst = std::max(worst, std::isfinite(l2) ? std::abs(l2 - l1) : INFINITY);
      ++done;
    }
    v.detail << name << " n=" << done << " max|diff|=" << fmt(worst) << "; ";
    v.require(done == 50, name + " instances");
    v.require(worst <= 1e-10, name + " tolerance");
  }
}

// ---------------------------------------------------------------- criterion 4

void check_toy(Verdict& v, const std::string& label, const ObjectiveFn& f, const Vec& start,
               const toys::Reference& ref) {
  const auto res = marquardt_maximize(f, start, {}, ConvergenceSettings{});
  v.require(res.converged(), label + " converged");
  v.require(res.crit_params <= 1e-4 && res.crit_loglik <= 1e-4 && res.crit_deriv <= 1e-4, label + " criteria");
  double est = 0.0, se = 0.0;
  if (res.covariance)
    for (int j = 0; j < ref.estimate.size(); ++j) {
      est = std::max(est, std::abs(res.theta[j] - ref.estimate[j]));
      se = std::max(se, std::abs(std::sqrt((*res.covariance)(j, j)) / ref.se[j] - 1.0));
    }
  else
    est = se = INFINITY;
  v.detail << label << " |est|=" << fmt(est) << " relSE=" << fmt(se) << "; ";
  v.require(est <= 1e-5, label + " estimates");
  v.require(se <= 1e-4, label + " standard errors");
}

void optimizer_correctness(Verdict& v) {
  for (const auto& [n, p, seed] : std::vector<std::tuple<int, int, int>>{{200, 4, 1}, {500, 3, 2}, {120, 6, 3}}) {
    const auto t = toys::linear_regression(n, p, seed);
    check_toy(v, "linear" + std::to_string(seed), t.objective(), t.start(), t.oracle());
  }
  for (const auto& [n, p, seed] : std::vector<std::tuple<int, int, int>>{{300, 3, 2}, {600, 4, 5}, {200, 2, 7}}) {
    const auto t = toys::logistic_regression(n, p, seed);
    check_toy(v, "logistic" + std::to_string(seed), t.objective(), Vec::Zero(p), t.oracle());
  }
  // an unreachable threshold on any one criterion blocks the flag
  const auto t = toys::logistic_regression(300, 3, 2);
  for (int k = 0; k < 3; ++k) {
    ConvergenceSettings s;
    (k == 0 ? s.eps_a : (k == 1 ? s.eps_b : s.eps_d)) = 1e-300;
    s.maxiter = 30;
    const auto res = marquardt_maximize(t.objective(), Vec::Zero(3), {}, s);
    v.require(!res.converged(), "flag without criterion " + std::to_string(k + 1));
  }
  ConvergenceSettings one;
  one.maxiter = 1;
  v.require(!marquardt_maximize(t.objective(), Vec::Zero(3), {}, one).converged(), "iteration cap");
}

// ---------------------------------------------------------------- criterion 5

ModelSpec long_spec(Family f) {
  ModelSpec s;
  s.family = f;
  s.subject = "id";
  s.time = "t";
  s.outcomes = {"y"};
  s.fixed = terms({"1", "t", "x"});
  s.random = terms({"1", "t"});
  if (f == Family::Lcmm) s.links = {LinkSpec{"linear", {}, std::nullopt}};
  return s;
}

void equivalent_models(Verdict& v) {
  const auto t0 = clock_type::now();
  SimDesign d;
  d.n_subjects = 150;
  d.jitter = 0.3;
  d.covariates = {{"x", CovariateGen::Kind::Binary, 0.5, 1.0}};
  d.seed = 55;
  const ModelSpec hs = long_spec(Family::Hlme);
  const auto tmpl = validate_and_build(hs, simulate_skeleton(hs, d));
  Vec truth(tmpl->layout.size());
  truth << 25.0, -1.2, 2.0, 3.0, 0.3, 0.8, 1.5;
  const auto data = simulate(*tmpl, truth, d);
  const auto mh = validate_and_build(hs, data);
  const auto ml = validate_and_build(long_spec(Family::Lcmm), data);
  const auto fh = fit_model(mh, init_default(*mh), FitOptions{});
  const auto fl = fit_model(ml, init_default(*ml), FitOptions{});
  const double diff = std::abs(fh.loglik() - fl.loglik());
  const double secs = since(t0);
  v.detail << "hlme logL=" << std::setprecision(10) << fh.loglik() << " lcmm logL=" << fl.loglik()
           << " |diff|=" << fmt(diff) << " " << fmt(secs) << " s";
  v.require(fh.opt.converged() && fl.opt.converged(), "convergence");
  v.require(diff <= 1e-3, "log-likelihood difference");
  v.require(secs < 30.0, "runtime");
}

// ---------------------------------------------------------------- criterion 6

// Class labels swapped for G = 2.
Vec swap_classes(const ValidatedModel& m, const Vec& th) {
  Vec out = th;
  for (int i = 0; i < m.layout.size(); ++i) {
    const Slot& s = m.layout.slots[i];
    if (s.block == Block::Classmb) {
      out[i] = -th[i];
      continue;
    }
    if (!s.class_specific()) continue;
    for (int j = 0; j < m.layout.size(); ++j) {
      const Slot& o = m.layout.slots[j];
      if (o.block == s.block && o.class_specific() && o.cls != s.cls && slot_key(m.st, o) == slot_key(m.st, s))
        out[i] = th[j];
    }
  }
  return out;
}

// Parameters identified only up to sign.
bool sign_free(const ValidatedModel& m, const Slot& s) {
  if (s.block == Block::Sigma) return true;
  if (s.block == Block::Zeta) return !m.st.baselines[s.cause].logscale;
  if (s.block == Block::Cholesky) {
    if (m.st.idiag) return true;
    for (int j = 0; j < m.st.q(); ++j)
      if (s.index == j * (j + 1) / 2 + j) return true;
  }
  return false;
}

struct RecoveryDesign {
  std::string label;
  ModelSpec spec;
  SimDesign sim;
  std::vector<std::pair<std::string, double>> truth;  // in layout order
};

struct RecoveryTally {
  std::vector<int> covered;
  int converged = 0;
  double worst_diag = 1.0;
};

void run_recovery(const RecoveryDesign& design, int replicates, RecoveryTally& tally) {
  const auto tmpl = validate_and_build(design.spec, simulate_skeleton(design.spec, design.sim));
  const int np = tmpl->layout.size();
  Vec truth(np);
  for (int i = 0; i < np; ++i) {
    if (tmpl->layout.slots[i].name != design.truth[i].first)
      throw Error("recovery design out of order at " + tmpl->layout.slots[i].name);
    truth[i] = design.truth[i].second;
  }
  tally.covered.assign(np, 0);
  for (int r = 0; r < replicates; ++r) {
    SimDesign sim = design.sim;
    sim.seed = 6000 + 97 * r;
    const auto data = simulate(*tmpl, truth, sim);
    const auto m1 = validate_and_build(one_class_spec(design.spec), data);
    const auto m2 = validate_and_build(design.spec, data);
    const auto f1 = fit_model(m1, init_default(*m1), FitOptions{});
    auto f2 = fit_model(m2, init_from_lower(*m2, f1), FitOptions{});
    if (!f2.opt.converged() || !f2.has_cov()) continue;
    ++tally.converged;
    auto distance = [&](const Vec& th) {
      double d = 0.0;
      for (int i = 0; i < np; ++i)
        if (m2->layout.slots[i].block == Block::Mixture) d += std::pow(th[i] - truth[i], 2);
      return d;
    };
    Vec est = f2.theta;
    Vec se = f2.se();
    Mat prob = posterior_probs(f2).prob;
    if (distance(swap_classes(*m2, est)) < distance(est)) {
      Vec se_sw = swap_classes(*m2, se);
      est = swap_classes(*m2, est);
      se = se_sw.cwiseAbs();
      prob.col(0).swap(prob.col(1));
    }
    for (int i = 0; i < np; ++i) {
      const bool free_sign = sign_free(*m2, m2->layout.slots[i]);
      const double e = free_sign ? std::abs(est[i]) : est[i];
      const double t = free_sign ? std::abs(truth[i]) : truth[i];
      if (std::abs(e - t) <= 3.0 * se[i]) ++tally.covered[i];
    }
    std::vector<int> cls(prob.rows());
    for (int i = 0; i < prob.rows(); ++i) cls[i] = argmax_lowest(prob.row(i).transpose());
    const auto summary = postprob_summary(prob, cls);
    for (int g = 0; g < 2; ++g) tally.worst_diag = std::min(tally.worst_diag, summary.table(g, g));
  }
}

void simulation_recovery(Verdict& v) {
  const auto t0 = clock_type::now();
  const int replicates = 25;

  RecoveryDesign hlme;
  hlme.label = "hlme";
  hlme.spec.family = Family::Hlme;
  hlme.spec.subject = "id";
  hlme.spec.time = "t";
  hlme.spec.outcomes = {"y"};
  hlme.spec.fixed = terms({"1", "t"});
  hlme.spec.mixture = terms({"1", "t"});
  hlme.spec.random = terms({"1"});
  hlme.spec.ng = 2;
  hlme.sim.n_subjects = 500;
  hlme.sim.visits = {0, 1, 2, 3, 4, 5};
  // class intercepts 3 random-intercept SDs apart
  hlme.truth = {{"intercept class1", -0.4}, {"intercept class1", 0.0}, {"intercept class2", 3.0},
                {"t class1", -0.5},         {"t class2", 0.3},         {"varcov 1", 1.0},
                {"stderr", 0.5}};

  RecoveryDesign joint = hlme;
  joint.label = "joint";
  joint.spec.family = Family::Jointlcmm;
  SurvivalSpec sv;
  sv.time = "T";
  sv.event = "E";
  SurvTermSpec x;
  x.term = parse_term("x");
  sv.terms = {x};
  joint.spec.survival = sv;
  joint.sim.covariates = {{"x", CovariateGen::Kind::Binary, 0.5, 1.0}};
  joint.sim.censor_time = 6.0;
  joint.truth = {{"intercept class1", -0.4},
                 {"event1 +/-sqrt(Weibull1) class1", std::sqrt(0.1)},
                 {"event1 +/-sqrt(Weibull2) class1", std::sqrt(1.5)},
                 {"event1 +/-sqrt(Weibull1) class2", std::sqrt(0.2)},
                 {"event1 +/-sqrt(Weibull2) class2", std::sqrt(1.2)},
                 {"x", 0.5},
                 {"intercept class1", 0.0},
                 {"intercept class2", 3.0},
                 {"t class1", -0.5},
                 {"t class2", 0.3},
                 {"varcov 1", 1.0},
                 {"stderr", 0.5}};

  for (const auto* d : {&hlme, &joint}) {
    RecoveryTally tally;
    run_recovery(*d, replicates, tally);
    const int need = static_cast<int>(std::ceil(0.9 * replicates));
    const int min_cov = tally.covered.empty() ? 0 : *std::min_element(tally.covered.begin(), tally.covered.end());
    v.detail << d->label << " converged " << tally.converged << "/" << replicates << " coverage";
    for (int c : tally.covered) v.detail << " " << c;
    v.detail << " min diag " << fmt(tally.worst_diag) << "; ";
    v.require(min_cov >= need, d->label + " coverage");
    v.require(tally.worst_diag > 0.8, d->label + " classification");
  }
  const double secs = since(t0);
  v.detail << fmt(secs) << " s";
  v.require(secs < 900.0, "runtime");
}

// ---------------------------------------------------------------- criterion 7

void grid_search(Verdict& v);

// ---------------------------------------------------------------- criterion 8

struct JointCase {
  std::shared_ptr<const ValidatedModel> model;
  DataTable data;
};

JointCase joint_model(std::vector<std::string> hazard, int causes, int ng, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> id, t, y, T, E, x;
  for (int i = 0; i < 40; ++i) {
    const double ti = 1.0 + 4.0 * u(gen);
    const double ei = std::floor(u(gen) * (causes + 1));
    for (double a = 0.0; a < ti; a += 1.0) {
      id.push_back(i + 1);
      t.push_back(a);
      y.push_back(u(gen) + a);
      T.push_back(ti);
      E.push_back(i < causes ? i + 1 : ei);
      x.push_back(i % 2);
    }
  }
  ModelSpec s;
  s.family = Family::Jointlcmm;
  s.subject = "id";
  s.time = "t";
  s.outcomes = {"y"};
  s.fixed = terms({"1", "t"});
  s.random = terms({"1"});
  s.ng = ng;
  if (ng > 1) s.mixture = terms({"1"});
  SurvivalSpec sv;
  sv.time = "T";
  sv.event = "E";
  sv.causes = causes;
  sv.hazard = std::move(hazard);
  SurvTermSpec term;
  term.term = parse_term("x");
  sv.terms = {term};
  s.survival = sv;
  auto d = make_table({"id", "t", "y", "T", "E", "x"}, {id, t, y, T, E, x});
  return {validate_and_build(s, d), d};
}

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

void invariant_suites(Verdict& v) {
  const auto t0 = clock_type::now();
  double worst = 0.0;

  const auto gh = gauss_hermite(30);
  for (int d = 0; d <= 59; ++d) {
    double s = 0.0, scale = 0.0;
    for (int i = 0; i < gh.size(); ++i) {
      s += gh.weights[i] * std::pow(gh.nodes[i], d);
      scale += gh.weights[i] * std::pow(std::abs(gh.nodes[i]), d);
    }
    worst = std::max(worst, std::abs(s - (d % 2 ? 0.0 : double_factorial(d - 1))) / scale);
  }
  v.detail << "GH30 deg59 rel=" << fmt(worst) << "; ";
  v.require(worst <= 1e-10, "Gauss-Hermite exactness");

  worst = 0.0;
  const auto gl = gauss_legendre(50, -0.5, 2.0);
  for (int d = 0; d <= 99; ++d) {
    double s = 0.0;
    for (int i = 0; i < gl.size(); ++i) s += gl.weights[i] * std::pow(gl.nodes[i], d);
    const double exact = (std::pow(2.0, d + 1) - std::pow(-0.5, d + 1)) / (d + 1);
    worst = std::max(worst, std::abs(s - exact) / std::abs(exact));
  }
  v.detail << "GL50 deg99 rel=" << fmt(worst) << "; ";
  v.require(worst <= 1e-12, "Gauss-Legendre exactness");

  std::mt19937_64 gen(8);
  double boundary = 0.0, unit = 0.0;
  for (int order : {3, 4})
    for (int nk : {3, 5, 7}) {
      std::vector<double> sample;
      std::uniform_real_distribution<double> u(0.0, 10.0);
      for (int i = 0; i < 60; ++i) sample.push_back(u(gen));
      std::sort(sample.begin(), sample.end());
      const SplineBasis b(place_knots(sample, nk, KnotPlacement::Quant), order);
      for (double x : b.ispline(b.knots().lo())) boundary = std::max(boundary, std::abs(x));
      for (double x : b.ispline(b.knots().hi())) boundary = std::max(boundary, std::abs(x - 1.0));
      const auto& k = b.knots().knots;
      for (int l = 0; l < b.size(); ++l) {
        double total = 0.0;
        for (std::size_t j = 0; j + 1 < k.size(); ++j)
          total += oracle::adaptive_simpson([&](double x) { return b.mspline(x)[l]; }, k[j], k[j + 1], 1e-13);
        unit = std::max(unit, std::abs(total - 1.0));
      }
    }
  v.detail << "I-spline boundary=" << fmt(boundary) << " M-spline integral=" << fmt(unit) << "; ";
  v.require(boundary <= 1e-12, "I-spline boundary values");
  v.require(unit <= 1e-10, "M-spline unit integrals");

  worst = 0.0;
  std::vector<double> events;
  for (int i = 1; i <= 40; ++i) events.push_back(0.5 + 0.25 * i + 0.1 * std::sin(i));
  for (const char* d : {"Weibull", "4-equi-piecewise", "5-quant-piecewise", "4-equi-splines", "6-quant-splines"})
    for (bool logscale : {false, true}) {
      const auto b = make_baseline(parse_hazard_descriptor(d), logscale, events, 0.0);
      std::uniform_real_distribution<double> u(0.3, 1.2);
      std::vector<double> raw(b.n_params());
      for (double& x : raw) x = logscale ? std::log(u(gen)) : u(gen);
      const double lo = b.lo(), hi = b.kind == BaselineKind::Weibull ? 12.0 : b.hi();
      std::uniform_real_distribution<double> ut(lo + 0.01, hi - 0.01);
      for (int r = 0; r < 100; ++r) {
        const double x = ut(gen), h = 1e-6;
        bool near_knot = false;
        if (b.knots)
          for (double k : b.knots->knots) near_knot = near_knot || std::abs(x - k) < 1e-5;
        if (near_knot) continue;
        const double fd = (b.cumulative(x + h, raw) - b.cumulative(x - h, raw)) / (2 * h);
        worst = std::max(worst, std::abs(fd - b.hazard(x, raw)) / std::max(1.0, b.hazard(x, raw)));
      }
    }
  v.detail << "dA/dt-lambda=" << fmt(worst) << "; ";
  v.require(worst <= 1e-6, "cumulative hazard derivative");

  worst = 0.0;
  for (const auto& hz : std::vector<std::vector<std::string>>{
           {"Weibull"}, {"4-equi-piecewise"}, {"4-equi-splines"}, {"Weibull", "3-quant-splines"}})
    for (int ng : {1, 2, 3}) {
      const auto m = joint_model(hz, 2, ng, 11 + ng).model;
      std::mt19937_64 g2(ng);
      const Vec th = random_theta(*m, g2);
      const auto ctx = make_context(*m, th);
      if (!ctx) {
        worst = INFINITY;
        continue;
      }
      double hi = 5.0;
      for (const auto& b : m->st.baselines) hi = std::min(hi, b.hi());
      for (const auto& s : m->subjects)
        for (double t : {0.25 * hi, 0.5 * hi, 0.75 * hi, hi})
          for (int g = 0; g < ng; ++g) {
            double sum = std::exp(-total_cumulative(*ctx, s, g, t));
            for (int p = 0; p < 2; ++p) sum += cause_incidence(*ctx, s, g, p, 0.0, t);
            worst = std::max(worst, std::abs(sum - 1.0));
          }
    }
  v.detail << "incidence+survival-1=" << fmt(worst) << "; ";
  v.require(worst <= 1e-9, "incidence partition");

  const double secs = since(t0);
  v.detail << fmt(secs) << " s";
  v.require(secs < 10.0, "runtime");
}

// ---------------------------------------------------------------- criterion 9

void dynpred_closed_form(Verdict& v) {
  for (const char* hz : {"Weibull", "5-equi-splines", "4-quant-splines"}) {
    const auto jc = joint_model({hz}, 1, 1, 21);
    const auto& m = jc.model;
    std::mt19937_64 gen(5);
    const Vec th = random_theta(*m, gen);
    const oracle::SubjectOracle o{*m, unpack(m->st, m->layout, th)};
    const auto& base = m->st.baselines[0];
    const double lo = base.lo(), span = (base.kind == BaselineKind::Weibull ? 5.0 : base.hi()) - lo;
    std::vector<double> landmarks, horizons;
    for (double f : {0.05, 0.2, 0.35, 0.5, 0.65}) landmarks.push_back(lo + f * span);
    for (double f : {0.01, 0.1, 0.2, 0.34}) horizons.push_back(f * span);
    std::vector<std::string> ids;
    for (const auto& s : m->subjects) ids.push_back(s.id);
    const auto pred = dynamic_prediction(*m, th, std::nullopt, jc.data, landmarks, horizons, 0, 1);
    double worst = 0.0;
    int n = 0;
    for (const auto& p : pred) {
      const auto it = std::find(ids.begin(), ids.end(), p.id);
      if (it == ids.end()) {
        worst = INFINITY;
        continue;
      }
      const auto& s = m->subjects[it - ids.begin()];
      const double ss = std::exp(-o.cause(s, 0, 0, p.landmark).second);
      const double st = std::exp(-o.cause(s, 0, 0, p.landmark + p.horizon).second);
      worst = std::max(worst, std::abs(p.band.value - (ss - st) / ss));
      ++n;
    }
    v.detail << hz << " n=" << n << " max|diff|=" << fmt(worst) << "; ";
    v.require(n == static_cast<int>(ids.size() * landmarks.size() * horizons.size()), std::string(hz) + " count");
    v.require(worst <= 1e-10, std::string(hz) + " tolerance");
  }
}

// ---------------------------------------------------------------- criterion 10

bool same_fit(const FittedModel& a, const FittedModel& b) {
  return a.theta == b.theta && a.loglik() == b.loglik() && a.opt.iterations == b.opt.iterations &&
         a.has_cov() == b.has_cov() && (!a.has_cov() || a.cov() == b.cov()) && a.grid_logliks == b.grid_logliks;
}

bool same_bands(const std::vector<Band>& a, const std::vector<Band>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x[4] = {a[i].value, a[i].lower, a[i].median, a[i].upper};
    const double y[4] = {b[i].value, b[i].lower, b[i].median, b[i].upper};
    if (std::memcmp(x, y, sizeof x) != 0) return false;
  }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(Verdict& v) {
  ModelSpec s = long_spec(Family::Hlme);
  s.random = terms({"1"});
  s.mixture = terms({"1", "t"});
  s.ng = 2;
  SimDesign d;
  d.n_subjects = 200;
  d.covariates = {{"x", CovariateGen::Kind::Binary, 0.5, 1.0}};
  d.seed = 77;
  const auto tmpl = validate_and_build(s, simulate_skeleton(s, d));
  Vec truth(tmpl->layout.size());
  truth << 0.0, 0.5, 0.0, 3.0, -0.5, 0.5, 1.0, 0.8;
  const auto data = simulate(*tmpl, truth, d);
  const auto m = validate_and_build(s, data);
  const auto m1 = validate_and_build(one_class_spec(s), data);
  const auto lower = fit_model(m1, init_default(*m1), FitOptions{});

  FitOptions o1, o3;
  o3.threads = 3;
  const auto f1 = fit_model(m, init_from_lower(*m, lower), o1);
  const auto f3 = fit_model(m, init_from_lower(*m, lower), o3);
  v.require(same_fit(f1, f3), "fit");
  const auto g1 = gridsearch(m, lower, 6, 5, 11, o1);
  const auto g3 = gridsearch(m, lower, 6, 5, 11, o3);
  v.require(same_fit(g1, g3), "gridsearch");

  PredictOptions p1, p3;
  p1.draws = p3.draws = 200;
  p1.seed = p3.seed = 9;
  p3.threads = 3;
  const auto nd = make_table({"t", "x"}, {{0.0, 1.5, 3.0}, {1.0, 0.0, 1.0}});
  auto bands = [](const Trajectory& t) {
    std::vector<Band> b;
    for (const auto& p : t.points) b.push_back(p.band);
    return b;
  };
  v.require(same_bands(bands(predict_trajectory(*m, f1.theta, f1.cov(), nd, p1)),
                       bands(predict_trajectory(*m, f1.theta, f1.cov(), nd, p3))),
            "trajectory bands");

  // outcome scale by Monte Carlo through a spline link
  ModelSpec ls = long_spec(Family::Lcmm);
  ls.links = {LinkSpec{"4-equi-splines", {}, std::nullopt}};
  const auto ml = validate_and_build(ls, data);
  std::mt19937_64 gen(3);
  const Vec thl = random_theta(*ml, gen);
  const Mat cov = Mat::Identity(thl.size(), thl.size()) * 1e-3;
  p1.scale = p3.scale = Scale::Outcome;
  p1.draws = p3.draws = 50;
  v.require(same_bands(bands(predict_trajectory(*ml, thl, cov, nd, p1)),
                       bands(predict_trajectory(*ml, thl, cov, nd, p3))),
            "outcome-scale bands");

  const auto jc = joint_model({"Weibull", "4-equi-splines"}, 2, 2, 31);
  const auto& mj = jc.model;
  const Vec thj = random_theta(*mj, gen);
  const Mat covj = Mat::Identity(thj.size(), thj.size()) * 1e-3;
  const auto profile = make_table({"x"}, {{1.0}});
  auto inc = [&](int threads) {
    std::vector<Band> b;
    for (const auto& p : cumulative_incidence(*mj, thj, covj, profile, {1.5, 3.0}, 100, 4, threads))
      b.push_back(p.band);
    for (const auto& p : dynamic_prediction(*mj, thj, covj, jc.data, {1.5}, {1.0}, 100, 4, threads))
      b.push_back(p.band);
    return b;
  };
  v.require(same_bands(inc(1), inc(3)), "incidence and dynamic prediction bands");

  // the command line tool with --threads
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(LATMIX_WORK_DIR) / "determinism";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "data.csv");
    write_csv(out, data);
  }
  write_json((dir / "model.json").string(), spec_to_json(s));
  write_json((dir / "model1.json").string(), spec_to_json(one_class_spec(s)));
  const std::string cli = LATMIX_CLI;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const std::string d_ = "\"" + dir.string() + "/";
  int rc = run("fit --model " + d_ + "model1.json\" --data " + d_ + "data.csv\" --out " + d_ + "g1.json\"");
  v.require(rc == 0, "cli one-class fit");
  for (int th : {1, 3}) {
    const std::string t = std::to_string(th);
    rc = run("fit --model " + d_ + "model.json\" --data " + d_ + "data.csv\" --init from:" + d_ +
             "g1.json\" --gridsearch 5,4 --seed 3 --threads " + t + " --out " + d_ + "g2_" + t + ".json\"");
    v.require(rc == 0 || rc == 2, "cli gridsearch fit");
    rc = run("predict --archive " + d_ + "g2_" + t + ".json\" --data " + d_ + "data.csv\" --newdata " + d_ +
             "data.csv\" --draws 100 --seed 5 --threads " + t + " --out " + d_ + "pred_" + t + ".csv\"");
    v.require(rc == 0, "cli predict");
  }
  const bool arch = slurp(dir / "g2_1.json") == slurp(dir / "g2_3.json") && !slurp(dir / "g2_1.json").empty();
  const bool pred = slurp(dir / "pred_1.csv") == slurp(dir / "pred_3.csv") && !slurp(dir / "pred_1.csv").empty();
  v.require(arch, "cli archive bytes");
  v.require(pred, "cli band bytes");
  v.detail << "fit, gridsearch, trajectory/outcome/incidence/dynpred bands and CLI outputs compared for threads 1 vs 3";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"parameter counts", parameter_counts},
      {"oracle equivalence", oracle_equivalence},
      {"mixture collapse", mixture_collapse},
      {"optimizer correctness", optimizer_correctness},
      {"lcmm linear equals hlme", equivalent_models},
      {"simulation recovery", simulation_recovery},
      {"grid search", grid_search},
      {"invariant suites", invariant_suites},
      {"dynamic prediction closed form", dynpred_closed_form},
      {"determinism across threads", determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      criteria[c].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    std::cout << "criterion " << id << " (" << criteria[c].first << "): " << (v.pass ? "PASS" : "FAIL") << "  "
              << v.detail.str() << std::endl;
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}

namespace {

void grid_search(Verdict& v) {
  // three groups, one rare and far out; a two-class fit can split off the
  // rare group or split the two large ones
  ModelSpec s3;
  s3.family = Family::Hlme;
  s3.subject = "id";
  s3.time = "t";
  s3.outcomes = {"y"};
  s3.fixed = terms({"1", "t"});
  s3.mixture = terms({"1", "t"});
  s3.random = terms({"1"});
  s3.ng = 3;
  SimDesign d;
  d.n_subjects = 150;
  d.visits = {0, 1, 2};
  const auto tmpl = validate_and_build(s3, simulate_skeleton(s3, d));
  Vec truth(tmpl->layout.size());
  truth << -2.0, 1.5, 6.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5;
  ModelSpec s2 = s3;
  s2.ng = 2;
  int at_least = 0, greater = 0;
  for (int r = 0; r < 10; ++r) {
    d.seed = 7000 + 13 * r;
    const auto data = simulate(*tmpl, truth, d);
    const auto m1 = validate_and_build(one_class_spec(s2), data);
    const auto m2 = validate_and_build(s2, data);
    const auto lower = fit_model(m1, init_default(*m1), FitOptions{});
    const auto automatic = fit_model(m2, init_from_lower(*m2, lower), FitOptions{});
    const auto grid = gridsearch(m2, lower, 30, 15, 100 + r, FitOptions{});
    const double diff = grid.loglik() - automatic.loglik();
    v.detail << std::fixed << std::setprecision(3) << automatic.loglik() << "->" << grid.loglik() << " ";
    at_least += diff >= -1e-4;
    greater += diff > 1e-3;
  }
  v.detail << "| not lower " << at_least << "/10, greater " << greater << "/10";
  v.require(at_least == 10, "grid search never worse");
  v.require(greater >= 3, "grid search strictly better in at least 3");
}

}  // namespace
