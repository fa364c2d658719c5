#include "latmix/postfit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "latmix/error.hpp"

namespace latmix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

Vec softmax(const Vec& logv) {
  const double mx = logv.maxCoeff();
  Vec p = (logv.array() - mx).exp();
  return p / p.sum();
}

EvalContext context_or_throw(const ValidatedModel& m, const Vec& theta) {
  auto ctx = make_context(m, theta);
  if (!ctx) throw Error("parameters are outside the admissible region");
  return std::move(*ctx);
}

void fill_band(Band& b, std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return;
  std::sort(v.begin(), v.end());
  b.lower = quantile_sorted(v, 0.025);
  b.median = quantile_sorted(v, 0.5);
  b.upper = quantile_sorted(v, 0.975);
}

std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Variance of the latent process at one design row in class g, before
// marker-specific terms.
double latent_variance(const EvalContext& ctx, const Vec& z, double cor_time, int g) {
  const ModelStructure& st = ctx.model->st;
  double v = st.q() > 0 ? z.dot(ctx.b_class[g] * z) : 0.0;
  if (st.cor == CorKind::BM) v += ctx.par.sigma_w * ctx.par.sigma_w * cor_time;
  if (st.cor == CorKind::AR) v += ctx.par.sigma_w * ctx.par.sigma_w;
  return v;
}

double marker_noise(const ModelParams& par, int k) {
  return par.sigma_alpha[k] * par.sigma_alpha[k] + par.sigma_eps[k] * par.sigma_eps[k];
}

SubjectData history_up_to(const SubjectData& s, double landmark) {
  SubjectData h = s;
  std::vector<int> keep;
  for (int v = 0; v < static_cast<int>(s.times.size()); ++v)
    if (s.times[v] <= landmark) keep.push_back(v);
  const int nv = static_cast<int>(keep.size());
  h.times.assign(nv, 0.0);
  h.cor_times.assign(nv, 0.0);
  h.x_fixed.resize(nv, s.x_fixed.cols());
  h.z.resize(nv, s.z.cols());
  h.x_contrast.resize(nv, s.x_contrast.cols());
  h.y.resize(nv, s.y.cols());
  for (int a = 0; a < nv; ++a) {
    const int v = keep[a];
    h.times[a] = s.times[v];
    h.cor_times[a] = s.cor_times[v];
    h.x_fixed.row(a) = s.x_fixed.row(v);
    h.z.row(a) = s.z.row(v);
    h.x_contrast.row(a) = s.x_contrast.row(v);
    h.y.row(a) = s.y.row(v);
  }
  h.obs.clear();
  for (int k = 0; k < static_cast<int>(s.y.cols()); ++k)
    for (int a = 0; a < nv; ++a)
      if (std::isfinite(h.y(a, k))) h.obs.push_back({k, a});
  h.has_survival = false;
  return h;
}

double history_log_density(const EvalContext& ctx, const SubjectData& h, int g) {
  if (h.n_obs() == 0) return 0.0;
  return class_log_density(ctx, h, g);
}

std::pair<double, double> hazard_support(const ModelStructure& st) {
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (const auto& b : st.baselines) {
    lo = std::max(lo, b.lo());
    hi = std::min(hi, b.hi());
  }
  return {lo, hi};
}

void check_time(const ModelStructure& st, double t) {
  const auto [lo, hi] = hazard_support(st);
  const double tol = 1e-10 * std::max(1.0, std::isfinite(hi) ? hi - lo : 1.0);
  if (t < lo - tol || t > hi + tol)
    throw Error("time " + format_time(t) + " is outside the hazard support");
}

}  // namespace

int argmax_lowest(const Vec& v) {
  int best = 0;
  for (int g = 1; g < v.size(); ++g)
    if (v[g] > v[best]) best = g;
  return best;
}

PosteriorTable posterior_probs(const ValidatedModel& m, const Vec& theta, int threads) {
  const EvalContext ctx = context_or_throw(m, theta);
  const int n = static_cast<int>(m.subjects.size()), G = m.st.G;
  PosteriorTable t;
  t.prob = Mat(n, G);
  const bool joint = m.st.joint();
  Mat prob_y(n, G);
  std::vector<int> failed(n, 0);
  parallel_for(n, threads, [&](int i) {
    const auto terms = subject_terms(ctx, m.subjects[i]);
    if (!terms) {
      failed[i] = 1;
      return;
    }
    const Vec ly = terms->log_prior + terms->log_long;
    prob_y.row(i) = softmax(ly).transpose();
    t.prob.row(i) = softmax(ly + terms->log_surv).transpose();
  });
  for (int i = 0; i < n; ++i)
    if (failed[i]) throw Error("likelihood evaluation failed for subject " + m.subjects[i].id);
  for (int i = 0; i < n; ++i) {
    t.ids.push_back(m.subjects[i].id);
    t.cls.push_back(argmax_lowest(t.prob.row(i).transpose()));
  }
  if (joint) {
    t.prob_y = prob_y;
    for (int i = 0; i < n; ++i) t.cls_y.push_back(argmax_lowest(prob_y.row(i).transpose()));
  }
  return t;
}

PosteriorTable posterior_probs(const FittedModel& fm, int threads) {
  return posterior_probs(*fm.model, fm.theta, threads);
}

PostprobSummary postprob_summary(const Mat& prob, const std::vector<int>& cls) {
  const int n = static_cast<int>(prob.rows()), G = static_cast<int>(prob.cols());
  PostprobSummary s;
  s.counts.assign(G, 0);
  s.proportions = Vec::Zero(G);
  s.table = Mat::Zero(G, G);
  s.above = Mat::Zero(G, 3);
  for (int i = 0; i < n; ++i) {
    const int g = cls[i];
    ++s.counts[g];
    s.table.row(g) += prob.row(i);
    for (int k = 0; k < 3; ++k)
      if (prob(i, g) > PostprobSummary::thresholds[k]) s.above(g, k) += 1.0;
  }
  for (int g = 0; g < G; ++g) {
    s.proportions[g] = n > 0 ? 100.0 * s.counts[g] / n : kNaN;
    if (s.counts[g] == 0) {
      s.table.row(g).setConstant(kNaN);
      s.above.row(g).setConstant(kNaN);
    } else {
      s.table.row(g) /= s.counts[g];
      s.above.row(g) *= 100.0 / s.counts[g];
    }
  }
  return s;
}

EmpiricalBayes empirical_bayes(const ValidatedModel& m, const Vec& theta, int threads) {
  if (m.st.ordinal()) throw Error("empirical Bayes estimates are not available with a thresholds link");
  const EvalContext ctx = context_or_throw(m, theta);
  const PosteriorTable post = posterior_probs(m, theta, threads);
  const int n = static_cast<int>(m.subjects.size()), G = m.st.G, q = m.st.q();
  EmpiricalBayes eb;
  eb.u_class.assign(n, Mat::Zero(q, G));
  eb.u = Mat::Zero(n, q);
  std::vector<int> failed(n, 0);
  parallel_for(n, threads, [&](int i) {
    const SubjectData& s = m.subjects[i];
    const auto tr = transform_outcomes(ctx, s);
    if (!tr) {
      failed[i] = 1;
      return;
    }
    const Mat z = stacked_z(s);
    for (int g = 0; g < G; ++g) {
      const auto f = cholesky(class_cov(ctx, s, g));
      if (!f) {
        failed[i] = 1;
        return;
      }
      const Vec r = tr->y - class_mean(ctx, s, g);
      eb.u_class[i].col(g) = ctx.b_class[g] * z.transpose() * f->solve(r);
    }
    eb.u.row(i) = (eb.u_class[i] * post.prob.row(i).transpose()).transpose();
  });
  for (int i = 0; i < n; ++i)
    if (failed[i]) throw Error("empirical Bayes computation failed for subject " + m.subjects[i].id);
  return eb;
}

std::vector<ObsPrediction> predictions_residuals(const ValidatedModel& m, const Vec& theta, int threads) {
  if (m.st.ordinal()) throw Error("predictions and residuals are not available with a thresholds link");
  const EvalContext ctx = context_or_throw(m, theta);
  const PosteriorTable post = posterior_probs(m, theta, threads);
  const Mat& pw = post.prob_y ? *post.prob_y : post.prob;
  const int n = static_cast<int>(m.subjects.size()), G = m.st.G;
  std::vector<std::vector<ObsPrediction>> per(n);
  std::vector<int> failed(n, 0);
  parallel_for(n, threads, [&](int i) {
    const SubjectData& s = m.subjects[i];
    const auto tr = transform_outcomes(ctx, s);
    if (!tr) {
      failed[i] = 1;
      return;
    }
    const int no = s.n_obs();
    const Vec prior = class_membership_probs(s.x_class, ctx.par.xi);
    Mat pm(no, G), pss(no, G);
    for (int g = 0; g < G; ++g) {
      const Vec mu = class_mean(ctx, s, g);
      const Mat v = class_cov(ctx, s, g);
      const auto f = cholesky(v);
      if (!f) {
        failed[i] = 1;
        return;
      }
      Mat signal = v;
      for (int a = 0; a < no; ++a) {
        const double se = ctx.par.sigma_eps[s.obs[a].marker];
        signal(a, a) -= se * se;
      }
      pm.col(g) = mu;
      pss.col(g) = mu + signal * f->solve(tr->y - mu);
    }
    for (int a = 0; a < no; ++a) {
      ObsPrediction o;
      o.subject = i;
      o.marker = s.obs[a].marker;
      o.time = s.times[s.obs[a].visit];
      o.obs = tr->y[a];
      o.pred_m_class = pm.row(a).transpose();
      o.pred_ss_class = pss.row(a).transpose();
      o.pred_m = pm.row(a).dot(prior);
      o.pred_ss = pss.row(a).dot(pw.row(i));
      per[i].push_back(std::move(o));
    }
  });
  std::vector<ObsPrediction> out;
  for (int i = 0; i < n; ++i) {
    if (failed[i]) throw Error("prediction failed for subject " + m.subjects[i].id);
    for (auto& o : per[i]) out.push_back(std::move(o));
  }
  return out;
}

std::vector<ProfileRow> profile_rows(const ValidatedModel& m, const DataTable& data, bool need_time) {
  const ModelSpec& spec = m.spec;
  auto require = [&](const std::vector<Term>& terms) {
    for (const auto& t : terms)
      for (const auto& f : t.factors)
        if (data.column(f) < 0) throw Error("prediction data lack covariate '" + f + "'");
  };
  auto available = [&](const std::vector<Term>& terms) {
    for (const auto& t : terms)
      for (const auto& f : t.factors)
        if (data.column(f) < 0) return false;
    return true;
  };
  const int ct = data.column(spec.time);
  if (need_time && ct < 0) throw Error("prediction data lack the time column '" + spec.time + "'");
  const bool with_long = need_time || (available(spec.fixed) && available(spec.random) && available(spec.contrasts));
  if (need_time) {
    require(spec.fixed);
    require(spec.random);
    require(spec.contrasts);
  }
  const std::string cor_name = spec.cor_time.empty() ? spec.time : spec.cor_time;
  const int cct = data.column(cor_name);
  if (spec.cor != CorKind::None && cct < 0) throw Error("prediction data lack the column '" + cor_name + "'");
  const bool with_class = available(spec.classmb);
  std::vector<Term> surv_terms;
  if (spec.survival)
    for (const auto& t : spec.survival->terms) surv_terms.push_back(t.term);
  const bool with_surv = available(surv_terms);

  auto eval = [&](const std::vector<Term>& terms, int row, int offset) {
    Vec v(static_cast<int>(terms.size()) + offset);
    if (offset) v[0] = 1.0;
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const double x = term_value(data, terms[j], row);
      if (!std::isfinite(x))
        throw Error("missing value of '" + terms[j].label() + "' in prediction data row " + std::to_string(row + 1));
      v[static_cast<int>(j) + offset] = x;
    }
    return v;
  };
  std::vector<ProfileRow> rows;
  for (int r = 0; r < data.rows(); ++r) {
    ProfileRow p;
    if (ct >= 0) {
      p.time = data.numeric[ct][r];
      if (need_time && !std::isfinite(p.time))
        throw Error("missing time in prediction data row " + std::to_string(r + 1));
    }
    p.cor_time = cct >= 0 ? data.numeric[cct][r] : p.time;
    if (with_long) {
      p.x_fixed = eval(spec.fixed, r, 0);
      p.z = eval(spec.random, r, 0);
      p.x_contrast = eval(spec.contrasts, r, 0);
    }
    if (with_class) p.x_class = eval(spec.classmb, r, 1);
    if (with_surv) p.x_surv = eval(surv_terms, r, 0);
    rows.push_back(std::move(p));
  }
  return rows;
}

double expected_outcome(const LinkFamily& f, const Vec& eta, double mean, double var, Integration integ,
                        int mc_samples, const CounterRng& rng) {
  const double sd = std::sqrt(std::max(0.0, var));
  switch (f.kind) {
    case LinkKind::Identity: return mean;
    case LinkKind::Thresholds: {
      const auto cuts = thresholds_expand(as_span(eta));
      double y = f.min_level + f.levels - 1;
      for (double c : cuts) {
        if (sd > 0.0) y -= normal_cdf((c - mean) / sd);
        else y -= mean <= c ? 1.0 : 0.0;
      }
      return y;
    }
    default: break;
  }
  const auto e = as_span(eta);
  if (sd == 0.0) return forward_transform(f, e, mean);
  if (integ == Integration::GaussHermite) {
    static const QuadratureRule gh = gauss_hermite(30);
    double s = 0.0;
    for (int k = 0; k < gh.size(); ++k) s += gh.weights[k] * forward_transform(f, e, mean + sd * gh.nodes[k]);
    return s;
  }
  const int pairs = std::max(1, mc_samples / 2);
  double s = 0.0;
  for (int j = 0; j < pairs; ++j) {
    const double z = rng.normal(static_cast<std::uint64_t>(j));
    s += forward_transform(f, e, mean + sd * z) + forward_transform(f, e, mean - sd * z);
  }
  return s / (2.0 * pairs);
}

namespace {

// All trajectory values at one parameter vector, in output order.
std::vector<double> trajectory_values(const ValidatedModel& m, const ModelParams& par,
                                      const std::vector<ProfileRow>& rows, const PredictOptions& opts,
                                      bool with_marginal) {
  const ModelStructure& st = m.st;
  const int G = st.G;
  EvalContext ctx;
  ctx.model = &m;
  ctx.par = par;
  for (int g = 0; g < G; ++g) ctx.b_class.push_back(par.omega[g] * par.omega[g] * par.B);
  std::vector<double> out;
  const bool latent = opts.scale == Scale::Latent;
  const int nmark = latent ? 1 : st.K;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    const ProfileRow& p = rows[r];
    const Vec pi = with_marginal ? class_membership_probs(*p.x_class, par.xi) : Vec();
    for (int k = 0; k < nmark; ++k) {
      double marg = 0.0;
      for (int g = 0; g < G; ++g) {
        double mean = p.x_fixed.dot(par.beta.col(g));
        double v;
        if (latent) {
          v = mean;
        } else {
          if (par.contrast.rows() > 0) mean += p.x_contrast.dot(par.contrast.col(k));
          const double var = latent_variance(ctx, p.z, p.cor_time, g) + marker_noise(par, k);
          const CounterRng rng(opts.seed, mix_seed(static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)));
          v = expected_outcome(st.links[k], par.link[k], mean, var, opts.integration, opts.mc_samples, rng);
        }
        out.push_back(v);
        if (with_marginal) marg += pi[g] * v;
      }
      if (with_marginal) out.push_back(marg);
    }
  }
  return out;
}

}  // namespace

std::vector<Vec> draw_parameters(const Vec& theta, const Mat& cov, int draws, std::uint64_t seed) {
  const Mat l = psd_sqrt(0.5 * (cov + cov.transpose()));
  const int n = static_cast<int>(theta.size());
  std::vector<Vec> out;
  out.reserve(draws);
  for (int d = 0; d < draws; ++d) {
    const CounterRng rng(seed, mix_seed(0xd4a3, static_cast<std::uint64_t>(d)));
    Vec z(n);
    for (int v = 0; v < n; ++v) z[v] = rng.normal(static_cast<std::uint64_t>(v));
    out.push_back(theta + l * z);
  }
  return out;
}

namespace {

// Evaluates fn at theta and, with draws, at each drawn theta; fills bands.
template <class Fn>
std::vector<Band> with_bands(const Vec& theta, const std::optional<Mat>& cov, int draws, std::uint64_t seed,
                             int threads, Fn fn) {
  const std::vector<double> est = fn(theta);
  std::vector<Band> bands(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) bands[i].value = est[i];
  if (draws <= 0) return bands;
  if (!cov) throw Error("percentile bands need the covariance of the estimates");
  const auto thetas = draw_parameters(theta, *cov, draws, seed);
  std::vector<std::vector<double>> vals(draws);
  parallel_for(draws, threads, [&](int d) {
    vals[d] = fn(thetas[d]);
    if (vals[d].size() != est.size()) vals[d].assign(est.size(), kNaN);
  });
  std::vector<double> col(draws);
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (int d = 0; d < draws; ++d) col[d] = vals[d][i];
    fill_band(bands[i], col);
  }
  return bands;
}

}  // namespace

Trajectory predict_trajectory(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov,
                              const DataTable& newdata, const PredictOptions& opts) {
  const auto rows = profile_rows(m, newdata);
  const bool with_marginal = m.st.G > 1 &&
                             std::all_of(rows.begin(), rows.end(), [](const ProfileRow& p) { return p.x_class.has_value(); });
  auto fn = [&](const Vec& th) {
    return trajectory_values(m, unpack(m.st, m.layout, th), rows, opts, with_marginal);
  };
  const auto bands = with_bands(theta, cov, opts.draws, opts.seed, opts.threads, fn);
  Trajectory t;
  const bool outcome_links = opts.scale == Scale::Outcome &&
                             std::any_of(m.st.links.begin(), m.st.links.end(), [](const LinkFamily& f) {
                               return f.kind != LinkKind::Identity && f.kind != LinkKind::Thresholds;
                             });
  t.correlation_neglected = outcome_links && opts.integration == Integration::GaussHermite;
  const int nmark = opts.scale == Scale::Latent ? 1 : m.st.K;
  std::size_t e = 0;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r)
    for (int k = 0; k < nmark; ++k)
      for (int g = 0; g < m.st.G + (with_marginal ? 1 : 0); ++g) {
        TrajectoryPoint p;
        p.row = r;
        p.time = rows[r].time;
        p.marker = opts.scale == Scale::Latent ? -1 : k;
        p.cls = g < m.st.G ? g : -1;
        p.band = bands[e++];
        t.points.push_back(p);
      }
  return t;
}

std::vector<OutcomeFit> fit_outcome_scale(const ValidatedModel& m, const Vec& theta, const PredictOptions& opts) {
  const EvalContext ctx = context_or_throw(m, theta);
  const int n = static_cast<int>(m.subjects.size()), G = m.st.G;
  std::vector<std::vector<OutcomeFit>> per(n);
  parallel_for(n, opts.threads, [&](int i) {
    const SubjectData& s = m.subjects[i];
    const Vec prior = class_membership_probs(s.x_class, ctx.par.xi);
    std::vector<Vec> mu(G);
    std::vector<Vec> var(G);
    for (int g = 0; g < G; ++g) {
      mu[g] = class_mean(ctx, s, g);
      Mat v = class_cov(ctx, s, g);
      if (m.st.ordinal()) v.diagonal().array() += 1.0;
      var[g] = v.diagonal();
    }
    for (int a = 0; a < s.n_obs(); ++a) {
      const int k = s.obs[a].marker;
      OutcomeFit o;
      o.subject = i;
      o.marker = k;
      o.time = s.times[s.obs[a].visit];
      o.obs = s.y(s.obs[a].visit, k);
      const CounterRng rng(opts.seed, mix_seed(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(a)));
      for (int g = 0; g < G; ++g)
        o.pred += prior[g] * expected_outcome(m.st.links[k], ctx.par.link[k], mu[g][a], var[g][a],
                                              opts.integration, opts.mc_samples, rng);
      per[i].push_back(o);
    }
  });
  std::vector<OutcomeFit> out;
  for (auto& v : per)
    for (auto& o : v) out.push_back(o);
  return out;
}

std::vector<LinkPoint> predict_link(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov,
                                    int nsim, int draws, std::uint64_t seed,
                                    const std::vector<std::vector<double>>& grid) {
  const ModelStructure& st = m.st;
  std::vector<std::vector<double>> ys(st.K);
  for (int k = 0; k < st.K; ++k) {
    const auto& f = st.links[k];
    if (f.kind == LinkKind::Thresholds) {
      for (int l = 0; l + 1 < f.levels; ++l) ys[k].push_back(f.min_level + l);
      continue;
    }
    double lo = f.lo, hi = f.hi;
    if (f.kind == LinkKind::Identity) {
      const auto [mn, mx] = std::minmax_element(m.marker_values[k].begin(), m.marker_values[k].end());
      lo = *mn;
      hi = *mx;
    }
    if (static_cast<int>(grid.size()) > k && !grid[k].empty()) {
      for (double y : grid[k])
        if (y < lo || y > hi) throw Error("link grid value " + format_time(y) + " outside the outcome range");
      ys[k] = grid[k];
    } else {
      if (nsim < 2) throw Error("nsim must be at least 2");
      for (int i = 0; i < nsim; ++i) ys[k].push_back(lo + (hi - lo) * i / (nsim - 1));
    }
  }
  auto fn = [&](const Vec& th) {
    const ModelParams par = unpack(st, m.layout, th);
    std::vector<double> out;
    for (int k = 0; k < st.K; ++k) {
      const auto& f = st.links[k];
      if (f.kind == LinkKind::Thresholds) {
        const auto cuts = thresholds_expand(as_span(par.link[k]));
        out.insert(out.end(), cuts.begin(), cuts.end());
        continue;
      }
      for (double y : ys[k]) {
        if (f.kind == LinkKind::Identity) {
          out.push_back(y);
          continue;
        }
        double v = kNaN;
        try {
          v = inverse_transform(f, as_span(par.link[k]), y, true).value;
        } catch (const Error&) {
        }
        out.push_back(v);
      }
    }
    return out;
  };
  const auto bands = with_bands(theta, cov, draws, seed, 1, fn);
  std::vector<LinkPoint> out;
  std::size_t e = 0;
  for (int k = 0; k < st.K; ++k)
    for (double y : ys[k]) out.push_back({k, y, bands[e++]});
  return out;
}

std::vector<VarExplained> var_explained(const ValidatedModel& m, const Vec& theta, const DataTable& at) {
  const EvalContext ctx = context_or_throw(m, theta);
  const auto rows = profile_rows(m, at);
  std::vector<VarExplained> out;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r)
    for (int g = 0; g < m.st.G; ++g) {
      const double vl = latent_variance(ctx, rows[r].z, rows[r].cor_time, g);
      for (int k = 0; k < m.st.K; ++k) {
        const double vy = vl + marker_noise(ctx.par, k);
        out.push_back({r, rows[r].time, g, k, vy > 0.0 ? 100.0 * vl / vy : kNaN});
      }
    }
  return out;
}

WaldResult wald_test(const Vec& theta, const Mat& cov, const Mat& c, const Vec& c0) {
  Vec r = c * theta;
  if (c0.size() > 0) r -= c0;
  const Mat v = c * cov * c.transpose();
  const auto f = cholesky(0.5 * (v + v.transpose()));
  if (!f) throw Error("the covariance of the tested combination is singular");
  WaldResult w;
  w.df = static_cast<int>(c.rows());
  w.statistic = r.dot(f->solve(r));
  w.p_value = boost::math::gamma_q(0.5 * w.df, 0.5 * std::max(0.0, w.statistic));
  return w;
}

std::vector<CoefRow> coefficient_table(const FittedModel& fm) {
  const auto& layout = fm.model->layout;
  const Vec se = fm.se();
  std::vector<CoefRow> out;
  for (int v = 0; v < fm.theta.size(); ++v) {
    CoefRow r;
    r.name = layout.slots[v].name;
    r.value = fm.theta[v];
    r.free = fm.is_free(v);
    r.se = r.free ? se[v] : kNaN;
    r.z = r.free ? r.value / r.se : kNaN;
    r.p = std::isfinite(r.z) ? std::erfc(std::abs(r.z) / std::sqrt(2.0)) : kNaN;
    out.push_back(r);
  }
  return out;
}

std::vector<VarcovEntry> varcov_re(const ValidatedModel& m, const Vec& theta, const std::optional<Mat>& cov) {
  const ModelStructure& st = m.st;
  const int q = st.q();
  const ModelParams par = unpack(st, m.layout, theta);
  std::vector<int> chol_slot(st.n_chol(), -1);
  for (int v = 0; v < m.layout.size(); ++v)
    if (m.layout.slots[v].block == Block::Cholesky) chol_slot[m.layout.slots[v].index] = v;
  Mat u = Mat::Zero(q, q);
  std::vector<std::pair<int, int>> pos;
  if (st.idiag) {
    for (int i = 0; i < q; ++i) pos.emplace_back(i, i);
  } else {
    for (int j = 0; j < q; ++j)
      for (int i = 0; i <= j; ++i) pos.emplace_back(i, j);
  }
  for (std::size_t e = 0; e < pos.size(); ++e) u(pos[e].first, pos[e].second) = par.chol[static_cast<int>(e)];
  std::vector<VarcovEntry> out;
  for (int j = 0; j < q; ++j)
    for (int i = 0; i <= j; ++i) {
      if (st.idiag && i != j) continue;
      VarcovEntry ent;
      ent.i = i;
      ent.j = j;
      ent.value = par.B(i, j);
      Vec grad = Vec::Zero(theta.size());
      for (std::size_t e = 0; e < pos.size(); ++e) {
        const int v = chol_slot[e];
        if (v < 0) continue;
        const auto [k, l] = pos[e];
        // B_ij = sum_k U_ki U_kj
        double d = 0.0;
        if (l == i) d += u(k, j);
        if (l == j) d += u(k, i);
        grad[v] = d;
      }
      if (cov) {
        ent.se = std::sqrt(std::max(0.0, grad.dot(*cov * grad)));
        ent.z = ent.se > 0.0 ? ent.value / ent.se : kNaN;
        ent.p = std::isfinite(ent.z) ? std::erfc(std::abs(ent.z) / std::sqrt(2.0)) : kNaN;
      } else {
        ent.se = ent.z = ent.p = kNaN;
      }
      out.push_back(ent);
    }
  return out;
}

double cause_incidence(const EvalContext& ctx, const SubjectData& s, int g, int p, double a, double b) {
  const ModelStructure& st = ctx.model->st;
  if (b <= a) return 0.0;
  if (st.P == 1) return std::exp(-total_cumulative(ctx, s, g, a)) - std::exp(-total_cumulative(ctx, s, g, b));
  std::vector<double> cuts{a, b};
  for (const auto& base : st.baselines)
    if (base.knots)
      for (double k : base.knots->knots)
        if (k > a && k < b) cuts.push_back(k);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // tanh-sinh copes with the Weibull singularity at the origin
  thread_local boost::math::quadrature::tanh_sinh<double> ts(12);
  const auto f = [&](double t) {
    return cause_hazard(ctx, s, g, p, t).lambda * std::exp(-total_cumulative(ctx, s, g, t));
  };
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) total += ts.integrate(f, cuts[c], cuts[c + 1], 1e-13);
  return total;
}

namespace {

SubjectData profile_subject(const ValidatedModel& m, const ProfileRow& p) {
  SubjectData s;
  s.id = "profile";
  s.x_class = p.x_class ? *p.x_class : Vec::Ones(m.st.n_classmb());
  if (!p.x_class && m.st.n_classmb() > 1) throw Error("profile lacks class-membership covariates");
  if (!p.x_surv) throw Error("profile lacks survival covariates");
  s.x_surv = *p.x_surv;
  return s;
}

EvalContext survival_context(const ValidatedModel& m, const Vec& theta) {
  EvalContext ctx;
  ctx.model = &m;
  ctx.par = unpack(m.st, m.layout, theta);
  return ctx;
}

}  // namespace

std::vector<IncidencePoint> cumulative_incidence(const ValidatedModel& m, const Vec& theta,
                                                 const std::optional<Mat>& cov, const DataTable& profile,
                                                 const std::vector<double>& times, int draws, std::uint64_t seed,
                                                 int threads) {
  const ModelStructure& st = m.st;
  if (!st.joint()) throw Error("cumulative incidences need a joint model");
  const auto rows = profile_rows(m, profile, false);
  if (rows.empty()) throw Error("empty covariate profile");
  const SubjectData s = profile_subject(m, rows[0]);
  for (double t : times) check_time(st, t);
  const double start = hazard_support(st).first;
  auto fn = [&](const Vec& th) {
    const EvalContext ctx = survival_context(m, th);
    const Vec pi = class_membership_probs(s.x_class, ctx.par.xi);
    std::vector<double> out;
    for (double t : times)
      for (int p = 0; p < st.P; ++p) {
        double marg = 0.0;
        for (int g = 0; g < st.G; ++g) {
          const double v = cause_incidence(ctx, s, g, p, start, t);
          out.push_back(v);
          marg += pi[g] * v;
        }
        if (st.G > 1) out.push_back(marg);
      }
    return out;
  };
  const auto bands = with_bands(theta, cov, draws, seed, threads, fn);
  std::vector<IncidencePoint> out;
  std::size_t e = 0;
  for (double t : times)
    for (int p = 0; p < st.P; ++p)
      for (int g = 0; g < st.G + (st.G > 1 ? 1 : 0); ++g) out.push_back({t, p, g < st.G ? g : -1, bands[e++]});
  return out;
}

double dynamic_probability(const EvalContext& ctx, const SubjectData& s, double landmark, double horizon,
                           int cause) {
  const ModelStructure& st = ctx.model->st;
  const SubjectData h = history_up_to(s, landmark);
  const Vec pi = class_membership_probs(s.x_class, ctx.par.xi);
  std::vector<double> num, den;
  for (int g = 0; g < st.G; ++g) {
    const double lf = history_log_density(ctx, h, g);
    if (!std::isfinite(lf)) return kNaN;
    const double base = std::log(pi[g]) + lf;
    const double a_s = total_cumulative(ctx, s, g, landmark);
    den.push_back(base - a_s);
    const double inc = cause_incidence(ctx, s, g, cause, landmark, landmark + horizon);
    num.push_back(inc > 0.0 ? base + std::log(inc) : -std::numeric_limits<double>::infinity());
  }
  if (std::all_of(num.begin(), num.end(), [](double x) { return std::isinf(x); })) return 0.0;
  return std::exp(log_sum_exp(num) - log_sum_exp(den));
}

std::vector<DynPrediction> dynamic_prediction(const ValidatedModel& m, const Vec& theta,
                                              const std::optional<Mat>& cov, const DataTable& history,
                                              const std::vector<double>& landmarks,
                                              const std::vector<double>& horizons, int draws,
                                              std::uint64_t seed, int threads) {
  const ModelStructure& st = m.st;
  if (!st.joint()) throw Error("dynamic predictions need a joint model");
  const auto subjects = subjects_for_prediction(m, history);
  if (subjects.empty()) throw Error("no subject with complete covariates in the history data");
  for (double s : landmarks)
    for (double t : horizons) {
      if (!(t >= 0.0)) throw Error("horizons must be nonnegative");
      check_time(st, s);
      check_time(st, s + t);
    }
  auto fn = [&](const Vec& th) {
    std::vector<double> out;
    const auto ctx = make_context(m, th);
    for (const auto& sd : subjects)
      for (double s : landmarks)
        for (double t : horizons)
          for (int p = 0; p < st.P; ++p) out.push_back(ctx ? dynamic_probability(*ctx, sd, s, t, p) : kNaN);
    return out;
  };
  if (!make_context(m, theta)) throw Error("parameters are outside the admissible region");
  const auto bands = with_bands(theta, cov, draws, seed, threads, fn);
  std::vector<DynPrediction> out;
  std::size_t e = 0;
  for (const auto& sd : subjects)
    for (double s : landmarks)
      for (double t : horizons)
        for (int p = 0; p < st.P; ++p) out.push_back({sd.id, s, t, p, bands[e++]});
  return out;
}

}  // namespace latmix
