#include "latmix/likelihood.hpp"

#include <cmath>
#include <limits>

#include "latmix/error.hpp"

namespace latmix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Mat chol_upper(const Vec& chol, int q, bool idiag) {
  Mat u = Mat::Zero(q, q);
  if (idiag) {
    for (int i = 0; i < q; ++i) u(i, i) = chol[i];
    return u;
  }
  int e = 0;
  for (int j = 0; j < q; ++j)
    for (int i = 0; i <= j; ++i) u(i, j) = chol[e++];
  return u;
}

// P(c_{l-1} < X <= c_l) for X ~ N(mu, 1), computed on the accurate tail.
double interval_prob(double lo, double hi, double mu) {
  const double a = lo - mu, b = hi - mu;
  if (a > 0.0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

}  // namespace

std::optional<EvalContext> make_context(const ValidatedModel& m, const Vec& theta) {
  const ModelStructure& st = m.st;
  EvalContext ctx;
  ctx.model = &m;
  ctx.par = unpack(st, m.layout, theta);
  if (!theta.allFinite()) return std::nullopt;
  for (int k = 0; k < st.K; ++k) {
    const auto& f = st.links[k];
    const Vec& eta = ctx.par.link[k];
    if (f.kind == LinkKind::Linear && !(eta[1] > 0.0)) return std::nullopt;
    if (f.kind == LinkKind::Beta && eta[3] == 0.0) return std::nullopt;
    if (f.kind == LinkKind::Thresholds)
      ctx.cuts.push_back(thresholds_expand(std::span<const double>(eta.data(), eta.size())));
    else
      ctx.cuts.emplace_back();
  }
  const double w0 = ctx.par.omega[0] * ctx.par.omega[0];
  for (int g = 0; g < st.G; ++g) {
    const double w = ctx.par.omega[g] * ctx.par.omega[g];
    if (w != w0) ctx.shared_cov = false;
    ctx.b_class.push_back(w * ctx.par.B);
  }
  if (st.ordinal()) {
    const Mat u = chol_upper(ctx.par.chol, st.q(), st.idiag);
    for (int g = 0; g < st.G; ++g) ctx.u_class.push_back(std::abs(ctx.par.omega[g]) * u);
    ctx.gh = gauss_hermite(st.gh_points);
  }
  return ctx;
}

std::optional<Transformed> transform_outcomes(const EvalContext& ctx, const SubjectData& s) {
  const ModelStructure& st = ctx.model->st;
  Transformed tr;
  tr.y = Vec(s.n_obs());
  for (int a = 0; a < s.n_obs(); ++a) {
    const auto& o = s.obs[a];
    const Vec& eta = ctx.par.link[o.marker];
    const auto lv = inverse_transform(st.links[o.marker], std::span<const double>(eta.data(), eta.size()),
                                      s.y(o.visit, o.marker));
    if (!std::isfinite(lv.value) || !std::isfinite(lv.log_jac)) return std::nullopt;
    tr.y[a] = lv.value;
    tr.log_jac += lv.log_jac;
  }
  return tr;
}

Vec class_mean(const EvalContext& ctx, const SubjectData& s, int g) {
  Vec mu(s.n_obs());
  const bool contrasts = ctx.par.contrast.rows() > 0;
  for (int a = 0; a < s.n_obs(); ++a) {
    const auto& o = s.obs[a];
    double v = s.x_fixed.row(o.visit).dot(ctx.par.beta.col(g));
    if (contrasts) v += s.x_contrast.row(o.visit).dot(ctx.par.contrast.col(o.marker));
    mu[a] = v;
  }
  return mu;
}

Mat stacked_z(const SubjectData& s) {
  Mat z(s.n_obs(), s.z.cols());
  for (int a = 0; a < s.n_obs(); ++a) z.row(a) = s.z.row(s.obs[a].visit);
  return z;
}

Mat class_cov(const EvalContext& ctx, const SubjectData& s, int g) {
  const ModelStructure& st = ctx.model->st;
  const int n = s.n_obs();
  Mat v = Mat::Zero(n, n);
  if (st.q() > 0) {
    const Mat z = stacked_z(s);
    v = z * ctx.b_class[g] * z.transpose();
  }
  if (st.cor != CorKind::None) {
    const double s2 = ctx.par.sigma_w * ctx.par.sigma_w;
    const double rate = ctx.par.rho * ctx.par.rho;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double ta = s.cor_times[s.obs[a].visit], tb = s.cor_times[s.obs[b].visit];
        v(a, b) += st.cor == CorKind::BM ? s2 * std::min(ta, tb) : s2 * std::exp(-rate * std::abs(ta - tb));
      }
  }
  for (int a = 0; a < n; ++a) {
    const int ka = s.obs[a].marker;
    const double sa = ctx.par.sigma_alpha[ka] * ctx.par.sigma_alpha[ka];
    for (int b = 0; b < n; ++b)
      if (s.obs[b].marker == ka) v(a, b) += sa;
    v(a, a) += ctx.par.sigma_eps[ka] * ctx.par.sigma_eps[ka];
  }
  return v;
}

namespace {

double ordinal_log_density(const EvalContext& ctx, const SubjectData& s, int g) {
  const ModelStructure& st = ctx.model->st;
  const auto& f = st.links[0];
  const auto& cuts = ctx.cuts[0];
  const Vec mu = class_mean(ctx, s, g);
  const int n = s.n_obs();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<int> lev(n);
  for (int a = 0; a < n; ++a) lev[a] = static_cast<int>(std::lround(s.y(s.obs[a].visit, 0))) - f.min_level;
  auto log_prob = [&](const Vec& lambda) {
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
      const double lo = lev[a] == 0 ? -inf : cuts[lev[a] - 1];
      const double hi = lev[a] == f.levels - 1 ? inf : cuts[lev[a]];
      acc += std::log(interval_prob(lo, hi, lambda[a]));
    }
    return acc;
  };
  const int q = st.q();
  if (q == 0) return log_prob(mu);
  const Mat z = stacked_z(s);
  const Mat zu = z * ctx.u_class[g].transpose();  // Lambda = mu + zu * node
  const int m = ctx.gh.size();
  long total = 1;
  for (int d = 0; d < q; ++d) total *= m;
  std::vector<double> terms;
  terms.reserve(total);
  std::vector<int> idx(q, 0);
  Vec node(q);
  for (long c = 0; c < total; ++c) {
    double lw = 0.0;
    for (int d = 0; d < q; ++d) {
      node[d] = ctx.gh.nodes[idx[d]];
      lw += std::log(ctx.gh.weights[idx[d]]);
    }
    terms.push_back(lw + log_prob(mu + zu * node));
    for (int d = 0; d < q; ++d) {
      if (++idx[d] < m) break;
      idx[d] = 0;
    }
  }
  return log_sum_exp(terms);
}

}  // namespace

double class_log_density(const EvalContext& ctx, const SubjectData& s, int g) {
  if (ctx.model->st.ordinal()) return ordinal_log_density(ctx, s, g);
  const auto tr = transform_outcomes(ctx, s);
  if (!tr) return kNaN;
  const auto lv = mvn_logdensity(tr->y, class_mean(ctx, s, g), class_cov(ctx, s, g));
  if (!lv) return kNaN;
  return *lv + tr->log_jac;
}

HazardValue cause_hazard(const EvalContext& ctx, const SubjectData& s, int g, int p, double t) {
  const ModelStructure& st = ctx.model->st;
  const auto& base = st.baselines[p];
  const Vec raw = ctx.par.zeta[p].col(g);
  const std::span<const double> rs(raw.data(), raw.size());
  double lp = ctx.par.ph(p, g);
  if (s.x_surv.size() > 0) lp += s.x_surv.dot(ctx.par.surv[p].col(g));
  const double f = std::exp(lp);
  return {f * base.hazard(t, rs), f * base.cumulative(t, rs)};
}

double total_cumulative(const EvalContext& ctx, const SubjectData& s, int g, double t) {
  double a = 0.0;
  for (int p = 0; p < ctx.model->st.P; ++p) a += cause_hazard(ctx, s, g, p, t).cum;
  return a;
}

std::optional<SubjectTerms> subject_terms(const EvalContext& ctx, const SubjectData& s) {
  const ModelStructure& st = ctx.model->st;
  const int G = st.G;
  SubjectTerms t;
  const Vec pi = class_membership_probs(s.x_class, ctx.par.xi);
  t.log_prior = pi.array().log();
  t.log_long = Vec(G);
  t.log_surv = Vec::Zero(G);

  if (st.ordinal()) {
    for (int g = 0; g < G; ++g) t.log_long[g] = ordinal_log_density(ctx, s, g);
  } else {
    const auto tr = transform_outcomes(ctx, s);
    if (!tr) return std::nullopt;
    std::optional<CholeskyFactor> shared;
    for (int g = 0; g < G; ++g) {
      std::optional<CholeskyFactor> own;
      const CholeskyFactor* f = nullptr;
      if (ctx.shared_cov) {
        if (!shared) {
          shared = cholesky(class_cov(ctx, s, g));
          if (!shared) return std::nullopt;
        }
        f = &*shared;
      } else {
        own = cholesky(class_cov(ctx, s, g));
        if (!own) return std::nullopt;
        f = &*own;
      }
      t.log_long[g] = mvn_logdensity(tr->y, class_mean(ctx, s, g), *f) + tr->log_jac;
    }
  }
  if (st.joint() && s.has_survival) {
    std::vector<double> entry(G);
    for (int g = 0; g < G; ++g) {
      double a = 0.0, ll = 0.0;
      for (int p = 0; p < st.P; ++p) {
        const auto h = cause_hazard(ctx, s, g, p, s.event_time);
        a += h.cum;
        if (s.event == p + 1) ll += std::log(h.lambda);
      }
      t.log_surv[g] = ll - a;
      if (s.has_entry) entry[g] = t.log_prior[g] - total_cumulative(ctx, s, g, s.entry);
    }
    if (s.has_entry) t.log_entry = log_sum_exp(entry);
  }
  for (int g = 0; g < G; ++g)
    if (std::isnan(t.log_long[g]) || std::isnan(t.log_surv[g])) return std::nullopt;
  return t;
}

double subject_loglik(const SubjectTerms& t) {
  const int G = static_cast<int>(t.log_prior.size());
  std::vector<double> v(G);
  for (int g = 0; g < G; ++g) v[g] = t.log_prior[g] + t.log_long[g] + t.log_surv[g];
  return log_sum_exp(v) - t.log_entry;
}

std::vector<double> subject_logliks(const ValidatedModel& m, const Vec& theta, int threads) {
  const int n = static_cast<int>(m.subjects.size());
  std::vector<double> out(n, kNaN);
  const auto ctx = make_context(m, theta);
  if (!ctx) return out;
  parallel_for(n, threads, [&](int i) {
    const auto t = subject_terms(*ctx, m.subjects[i]);
    out[i] = t ? subject_loglik(*t) : kNaN;
  });
  return out;
}

double total_loglik(const ValidatedModel& m, const Vec& theta, int threads) {
  const auto v = subject_logliks(m, theta, threads);
  double s = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return kNaN;
    s += x;
  }
  return s;
}

}  // namespace latmix
