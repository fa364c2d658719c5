#include "latmix/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "latmix/error.hpp"
#include "latmix/likelihood.hpp"

namespace latmix {

int FittedModel::n_free() const {
  int n = 0;
  for (int v = 0; v < theta.size(); ++v) n += is_free(v);
  return n;
}

double FittedModel::bic() const {
  return -2.0 * loglik() + n_free() * std::log(static_cast<double>(model->counts.subjects));
}

Vec FittedModel::se() const {
  Vec s(theta.size());
  for (int v = 0; v < theta.size(); ++v) {
    if (!is_free(v)) s[v] = 0.0;
    else if (!has_cov()) s[v] = std::numeric_limits<double>::quiet_NaN();
    else s[v] = std::sqrt(std::max(0.0, cov()(v, v)));
  }
  return s;
}

ObjectiveFn make_objective(std::shared_ptr<const ValidatedModel> m) {
  return [m](const Vec& theta) { return total_loglik(*m, theta, 1); };
}

FittedModel fit_model(std::shared_ptr<const ValidatedModel> m, const Vec& theta0, const FitOptions& opts) {
  if (theta0.size() != m->layout.size())
    throw Error("initial vector has length " + std::to_string(theta0.size()) + ", model has " +
                std::to_string(m->layout.size()) + " parameters");
  FittedModel fm;
  fm.model = m;
  fm.mask = opts.mask;
  ConvergenceSettings conv = opts.conv;
  if (conv.maxiter <= 0) conv.maxiter = default_maxiter(m->spec.family);
  fm.conv = conv;
  fm.opt = marquardt_maximize(make_objective(m), theta0, opts.mask, conv, opts.threads);
  fm.theta = fm.opt.theta;
  if (!fm.opt.covariance) fm.notes.push_back("Hessian not positive definite at the estimate; no covariance");
  return fm;
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Vec link_init(const LinkFamily& f, const std::vector<double>& y) {
  const int n = f.n_params();
  Vec eta = Vec::Zero(n);
  switch (f.kind) {
    case LinkKind::Identity: break;
    case LinkKind::Linear:
      eta << mean(y), 1.0;
      break;
    case LinkKind::Beta:
      eta << 0.0, -std::log(2.0), 0.7, 0.1;
      break;
    case LinkKind::Splines:
      eta.setConstant(0.1);
      eta[0] = -2.0;
      break;
    case LinkKind::Thresholds: {
      const int M = f.levels;
      if (M == 2) break;
      std::vector<double> s = y;
      std::sort(s.begin(), s.end());
      const double med = quantile_sorted(s, 0.5);
      const double u98 = normal_quantile(0.98);
      eta.setConstant(std::sqrt(2.0 * u98 / (M - 2)));
      eta[0] = 2.0 * u98 * (-med + s.front() + 1.0) / (M - 2);
      break;
    }
  }
  return eta;
}

Vec zeta_init(const ValidatedModel& m, int p, std::vector<std::string>* notes) {
  const Baseline& b = m.st.baselines[p];
  const int n = b.n_params();
  Vec z(n);
  switch (b.kind) {
    case BaselineKind::Weibull: {
      double ne = 0.0, st = 0.0;
      for (const auto& s : m.subjects)
        if (s.event == p + 1) {
          ne += 1.0;
          st += s.event_time;
        }
      double ratio = 0.5;
      if (ne > 0.0 && st > 0.0) {
        ratio = ne / st;
      } else if (notes) {
        notes->push_back("cause " + std::to_string(p + 1) +
                         " has no observed event; Weibull start uses the fallback rate 0.5");
      }
      if (b.logscale) z << std::log(ratio), 0.0;
      else z << std::sqrt(ratio), 1.0;
      break;
    }
    case BaselineKind::Piecewise:
    case BaselineKind::Msplines:
      z.setConstant(b.logscale ? -std::log(static_cast<double>(n)) : std::sqrt(1.0 / n));
      break;
  }
  return z;
}

}  // namespace

Vec init_default(const ValidatedModel& m, std::vector<std::string>* notes) {
  const ModelStructure& st = m.st;
  ModelParams par = unpack(st, m.layout, Vec::Zero(m.layout.size()));
  if (st.intercept >= 0 && !st.intercept_constrained)
    par.beta.row(st.intercept).setConstant(mean(m.marker_values[0]));
  par.chol.setZero();
  if (st.idiag) par.chol.setOnes();
  else
    for (int j = 0; j < st.q(); ++j) par.chol[j * (j + 1) / 2 + j] = 1.0;
  par.omega.setOnes();
  par.sigma_w = 1.0;
  par.rho = 0.0;
  par.sigma_alpha.setOnes();
  par.sigma_eps.setOnes();
  for (int k = 0; k < st.K; ++k) par.link[k] = link_init(st.links[k], m.marker_values[k]);
  for (int p = 0; p < st.P; ++p) {
    const Vec z = zeta_init(m, p, notes);
    for (int g = 0; g < st.G; ++g) par.zeta[p].col(g) = z;
  }
  return pack(st, m.layout, par);
}

namespace {

std::map<std::string, int> lower_index(const FittedModel& lower) {
  const auto& lm = *lower.model;
  if (lm.st.G != 1) throw Error("initial values from a lower model need a one-class fit");
  std::map<std::string, int> idx;
  for (int v = 0; v < lm.layout.size(); ++v) idx[slot_key(lm.st, lm.layout.slots[v])] = v;
  return idx;
}

// Fills theta from per-class source vectors `src[g]` (indexed by lower slots).
Vec assemble(const ValidatedModel& target, const FittedModel& lower, const std::vector<Vec>& src,
             std::vector<std::string>* notes) {
  const auto idx = lower_index(lower);
  Vec theta = init_default(target, nullptr);
  int unmatched = 0;
  for (int v = 0; v < target.layout.size(); ++v) {
    const Slot& s = target.layout.slots[v];
    if (s.block == Block::Classmb) {
      theta[v] = 0.0;
      continue;
    }
    if (s.block == Block::Omega) {
      theta[v] = 1.0;
      continue;
    }
    if (s.block == Block::PhOffset) {
      theta[v] = (s.cls + 1) / 2.0;
      continue;
    }
    const auto it = idx.find(slot_key(target.st, s));
    if (it == idx.end()) {
      ++unmatched;
      continue;
    }
    theta[v] = src[s.cls >= 0 ? s.cls : 0][it->second];
    if (s.cls < 0) theta[v] = lower.theta[it->second];
  }
  if (unmatched > 0 && notes)
    notes->push_back(std::to_string(unmatched) + " parameters have no one-class counterpart; default values used");
  return theta;
}

}  // namespace

Vec init_from_lower(const ValidatedModel& target, const FittedModel& lower, std::vector<std::string>* notes) {
  Vec se = lower.se();
  if (!lower.has_cov()) {
    if (notes) notes->push_back("one-class fit has no covariance; class-specific values are replicated");
    se.setZero();
  }
  const int G = target.st.G;
  std::vector<Vec> src;
  for (int g = 0; g < G; ++g) src.push_back(lower.theta + ((g + 1) - (G + 1) / 2.0) * se);
  return assemble(target, lower, src, notes);
}

Vec init_random(const ValidatedModel& target, const FittedModel& lower, std::uint64_t seed,
                std::uint64_t stream, std::vector<std::string>* notes) {
  const int n = static_cast<int>(lower.theta.size());
  std::vector<int> free;
  for (int v = 0; v < n; ++v)
    if (lower.is_free(v)) free.push_back(v);
  const int nf = static_cast<int>(free.size());
  Mat l = Mat::Zero(nf, nf);
  if (!lower.has_cov()) throw Error("random initial values need the covariance of the one-class fit");
  {
    Mat c(nf, nf);
    for (int a = 0; a < nf; ++a)
      for (int b = 0; b < nf; ++b) c(a, b) = lower.cov()(free[a], free[b]);
    if (auto f = cholesky(c)) {
      l = f->lower;
    } else {
      if (notes) notes->push_back("covariance of the one-class fit is not positive definite; diagonal draws used");
      for (int a = 0; a < nf; ++a) l(a, a) = std::sqrt(std::max(0.0, c(a, a)));
    }
  }
  const int G = target.st.G;
  std::vector<Vec> src;
  for (int g = 0; g < G; ++g) {
    const CounterRng rng(seed, mix_seed(stream, static_cast<std::uint64_t>(g)));
    Vec z(nf);
    for (int a = 0; a < nf; ++a) z[a] = rng.normal(static_cast<std::uint64_t>(a));
    const Vec dz = l * z;
    Vec draw = lower.theta;
    for (int a = 0; a < nf; ++a) draw[free[a]] += dz[a];
    src.push_back(std::move(draw));
  }
  return assemble(target, lower, src, notes);
}

FittedModel gridsearch(std::shared_ptr<const ValidatedModel> target, const FittedModel& lower, int rep,
                       int m, std::uint64_t seed, const FitOptions& opts) {
  if (rep < 1 || m < 1) throw Error("gridsearch needs rep >= 1 and maxiter >= 1");
  std::vector<double> interim(rep, -std::numeric_limits<double>::infinity());
  std::vector<Vec> thetas(rep);
  FitOptions short_opts = opts;
  short_opts.conv.maxiter = m;
  short_opts.threads = 1;
  parallel_for(rep, opts.threads, [&](int r) {
    const Vec start = init_random(*target, lower, seed, static_cast<std::uint64_t>(r));
    thetas[r] = start;
    try {
      const auto res = marquardt_maximize(make_objective(target), start, opts.mask, short_opts.conv, 1);
      interim[r] = res.loglik;
      thetas[r] = res.theta;
    } catch (const Error&) {
    }
  });
  int best = 0;
  for (int r = 1; r < rep; ++r)
    if (interim[r] > interim[best]) best = r;
  if (!std::isfinite(interim[best])) throw Error("gridsearch: no replicate produced a finite log-likelihood");
  FittedModel fm = fit_model(target, thetas[best], opts);
  fm.grid_logliks = interim;
  fm.notes.push_back("gridsearch: replicate " + std::to_string(best + 1) + " of " + std::to_string(rep) +
                     " selected");
  return fm;
}

ModelSpec one_class_spec(const ModelSpec& s) {
  ModelSpec o = s;
  o.ng = 1;
  o.mixture.clear();
  o.classmb.clear();
  o.nwg = false;
  if (o.survival)
    for (auto& t : o.survival->terms) t.mixture = false;
  return o;
}

}  // namespace latmix
