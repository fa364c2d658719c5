#include "latmix/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

#include "latmix/error.hpp"
#include "latmix/likelihood.hpp"

namespace latmix {

namespace {

void add_column(DataTable& t, const std::string& name, std::vector<double> v) {
  std::vector<std::string> txt(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) continue;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    txt[i] = buf;
  }
  t.names.push_back(name);
  t.numeric.push_back(std::move(v));
  t.text.push_back(std::move(txt));
}

}  // namespace

DataTable simulate_skeleton(const ModelSpec& spec, const SimDesign& d) {
  if (d.n_subjects < 1 || d.visits.empty()) throw Error("simulation design needs subjects and visits");
  std::vector<double> id, time;
  std::vector<std::vector<double>> cov(d.covariates.size());
  for (int i = 0; i < d.n_subjects; ++i) {
    RngStream rng(d.seed, mix_seed(0x5eed, static_cast<std::uint64_t>(i)));
    std::vector<double> vals;
    for (const auto& c : d.covariates) {
      switch (c.kind) {
        case CovariateGen::Kind::Binary: vals.push_back(rng.uniform() < c.a ? 1.0 : 0.0); break;
        case CovariateGen::Kind::Normal: vals.push_back(c.a + c.b * rng.normal()); break;
        case CovariateGen::Kind::Uniform: vals.push_back(c.a + (c.b - c.a) * rng.uniform()); break;
      }
    }
    for (std::size_t v = 0; v < d.visits.size(); ++v) {
      double t = d.visits[v];
      if (v > 0 && d.jitter > 0.0) t += d.jitter * (2.0 * rng.uniform() - 1.0);
      id.push_back(i + 1);
      time.push_back(t);
      for (std::size_t c = 0; c < vals.size(); ++c) cov[c].push_back(vals[c]);
    }
  }
  const std::size_t n = id.size();
  DataTable t;
  add_column(t, spec.subject, id);
  add_column(t, spec.time, time);
  if (!spec.cor_time.empty() && spec.cor_time != spec.time) add_column(t, spec.cor_time, time);
  for (std::size_t c = 0; c < d.covariates.size(); ++c) add_column(t, d.covariates[c].name, cov[c]);
  RngStream noise(d.seed, 0x0b5);
  for (const auto& o : spec.outcomes) {
    std::vector<double> y(n);
    for (auto& v : y) v = noise.normal();
    add_column(t, o, std::move(y));
  }
  if (spec.survival) {
    const double last = *std::max_element(time.begin(), time.end()) + 1.0;
    if (!spec.survival->entry.empty()) add_column(t, spec.survival->entry, std::vector<double>(n, 0.0));
    add_column(t, spec.survival->time, std::vector<double>(n, last));
    add_column(t, spec.survival->event, std::vector<double>(n, 0.0));
  }
  return t;
}

double invert_cumulative(const std::function<double(double)>& cum, double target, double lo, double hi) {
  if (cum(hi) < target) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-10 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cum(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

DataTable simulate_outcomes(const ValidatedModel& m, const Vec& theta, const DataTable& skeleton,
                            std::uint64_t seed, double censor_time, double censor_rate,
                            std::vector<int>* classes) {
  const ModelSpec& spec = m.spec;
  const ModelStructure& st = m.st;
  const auto ctx_opt = make_context(m, theta);
  if (!ctx_opt) throw Error("simulation parameters are outside the admissible region");
  const EvalContext& ctx = *ctx_opt;
  const ModelParams& par = ctx.par;

  const auto order = subject_time_order(skeleton, spec.subject, spec.time);
  const int cs = skeleton.column(spec.subject);
  const int ct = skeleton.column(spec.time);
  const std::string cor_name = spec.cor_time.empty() ? spec.time : spec.cor_time;
  const int cct = skeleton.column(cor_name);
  std::vector<int> cy;
  for (const auto& o : spec.outcomes) {
    cy.push_back(skeleton.column(o));
    if (cy.back() < 0) throw Error("skeleton lacks outcome column '" + o + "'");
  }
  int c_time = -1, c_event = -1, c_entry = -1;
  if (spec.survival) {
    c_time = skeleton.column(spec.survival->time);
    c_event = skeleton.column(spec.survival->event);
    if (!spec.survival->entry.empty()) c_entry = skeleton.column(spec.survival->entry);
    if (c_time < 0 || c_event < 0) throw Error("skeleton lacks survival columns");
  }

  DataTable out = skeleton;
  std::vector<bool> keep(skeleton.rows(), true);
  if (classes) classes->clear();

  std::size_t start = 0;
  int subject = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && skeleton.text[cs][order[end]] == skeleton.text[cs][order[start]]) ++end;
    const int first = order[start];
    RngStream rng(seed, static_cast<std::uint64_t>(subject));

    Vec xc = Vec::Ones(st.n_classmb());
    for (std::size_t t = 0; t < spec.classmb.size(); ++t) xc[t + 1] = term_value(skeleton, spec.classmb[t], first);
    const Vec pi = class_membership_probs(xc, par.xi);
    const int g = rng.categorical(std::span<const double>(pi.data(), pi.size()));
    if (classes) classes->push_back(g);

    const int nv = static_cast<int>(end - start);
    std::vector<double> times(nv), ctimes(nv);
    Mat x(nv, st.p()), z(nv, st.q()), xk(nv, static_cast<int>(spec.contrasts.size()));
    for (int v = 0; v < nv; ++v) {
      const int row = order[start + v];
      times[v] = skeleton.numeric[ct][row];
      ctimes[v] = cct >= 0 ? skeleton.numeric[cct][row] : times[v];
      for (int j = 0; j < st.p(); ++j) x(v, j) = term_value(skeleton, spec.fixed[j], row);
      for (int j = 0; j < st.q(); ++j) z(v, j) = term_value(skeleton, spec.random[j], row);
      for (int j = 0; j < xk.cols(); ++j) xk(v, j) = term_value(skeleton, spec.contrasts[j], row);
    }
    // latent process
    Vec u = Vec::Zero(st.q());
    if (st.q() > 0) {
      Vec e(st.q());
      for (int j = 0; j < st.q(); ++j) e[j] = rng.normal();
      u = psd_sqrt(ctx.b_class[g]) * e;
    }
    Vec w = Vec::Zero(nv);
    if (st.cor != CorKind::None) {
      Mat r(nv, nv);
      const double s2 = par.sigma_w * par.sigma_w, rate = par.rho * par.rho;
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
          r(a, b) = st.cor == CorKind::BM ? s2 * std::min(ctimes[a], ctimes[b])
                                          : s2 * std::exp(-rate * std::abs(ctimes[a] - ctimes[b]));
      Vec e(nv);
      for (int a = 0; a < nv; ++a) e[a] = rng.normal();
      w = psd_sqrt(r) * e;
    }
    const Vec lambda = x * par.beta.col(g) + (st.q() > 0 ? Vec(z * u) : Vec::Zero(nv)) + w;

    for (int k = 0; k < st.K; ++k) {
      const double alpha = par.sigma_alpha[k] * rng.normal();
      const Vec& eta = par.link[k];
      const std::span<const double> es(eta.data(), eta.size());
      for (int v = 0; v < nv; ++v) {
        const int row = order[start + v];
        double ytil = lambda[v] + alpha + par.sigma_eps[k] * rng.normal();
        if (xk.cols() > 0) ytil += xk.row(v).dot(par.contrast.col(k));
        double y;
        if (st.links[k].kind == LinkKind::Thresholds) {
          int level = 0;
          for (double c : ctx.cuts[k])
            if (ytil > c) ++level;
          y = st.links[k].min_level + level;
        } else {
          y = forward_transform(st.links[k], es, ytil);
        }
        out.numeric[cy[k]][row] = y;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", y);
        out.text[cy[k]][row] = buf;
      }
    }

    if (spec.survival) {
      SubjectData sd;
      sd.x_surv = Vec(static_cast<int>(spec.survival->terms.size()));
      for (std::size_t t = 0; t < spec.survival->terms.size(); ++t)
        sd.x_surv[static_cast<int>(t)] = term_value(skeleton, spec.survival->terms[t].term, first);
      double lo = 0.0, hi = censor_time;
      for (const auto& b : st.baselines) {
        lo = std::max(lo, b.lo());
        hi = std::min(hi, b.hi());
      }
      if (!std::isfinite(hi)) {
        hi = 1.0;
        while (total_cumulative(ctx, sd, g, hi) < 50.0 && hi < 1e12) hi *= 2.0;
      }
      const double target = -std::log(rng.uniform());
      auto cum = [&](double t) { return total_cumulative(ctx, sd, g, t) - total_cumulative(ctx, sd, g, lo); };
      double t_event = invert_cumulative(cum, target, lo, hi);
      bool event = cum(hi) >= target && t_event < hi;
      double cens = censor_time;
      if (censor_rate > 0.0) cens = std::min(cens, lo - std::log(rng.uniform()) / censor_rate);
      else rng.uniform();
      if (std::isfinite(hi)) cens = std::min(cens, hi);
      int cause = 0;
      if (event && t_event <= cens) {
        std::vector<double> lam(st.P);
        for (int p = 0; p < st.P; ++p) lam[p] = cause_hazard(ctx, sd, g, p, t_event).lambda;
        double tot = 0.0;
        for (double l : lam) tot += l;
        for (double& l : lam) l /= tot;
        cause = 1 + rng.categorical(lam);
      } else {
        t_event = cens;
      }
      for (int v = 0; v < nv; ++v) {
        const int row = order[start + v];
        if (times[v] > t_event) keep[row] = false;
        out.numeric[c_time][row] = t_event;
        out.numeric[c_event][row] = cause;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", t_event);
        out.text[c_time][row] = buf;
        out.text[c_event][row] = std::to_string(cause);
        if (c_entry >= 0) {
          out.numeric[c_entry][row] = lo;
          std::snprintf(buf, sizeof buf, "%.17g", lo);
          out.text[c_entry][row] = buf;
        }
      }
    }
    ++subject;
    start = end;
  }

  DataTable kept;
  kept.names = out.names;
  kept.numeric.assign(out.cols(), {});
  kept.text.assign(out.cols(), {});
  for (std::size_t r = 0; r < order.size(); ++r) {
    const int row = order[r];
    if (!keep[row]) continue;
    for (int c = 0; c < out.cols(); ++c) {
      kept.numeric[c].push_back(out.numeric[c][row]);
      kept.text[c].push_back(out.text[c][row]);
    }
  }
  return kept;
}

DataTable simulate(const ValidatedModel& m, const Vec& theta, const SimDesign& d, std::vector<int>* classes) {
  const DataTable sk = simulate_skeleton(m.spec, d);
  return simulate_outcomes(m, theta, sk, d.seed, d.censor_time, d.censor_rate, classes);
}

}  // namespace latmix
