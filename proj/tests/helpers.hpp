#pragma once

// Table builders and random model instances shared by the test binaries.

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "latmix/error.hpp"
#include "latmix/io.hpp"
#include "latmix/likelihood.hpp"
#include "latmix/model.hpp"

namespace testing_util {

using namespace latmix;

inline DataTable make_table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
  DataTable t;
  t.names = names;
  t.numeric = cols;
  t.text.resize(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (double v : cols[c]) t.text[c].push_back(format_double(v));
  return t;
}

inline std::vector<Term> terms(std::initializer_list<const char*> labels) {
  std::vector<Term> out;
  for (const char* l : labels) out.push_back(parse_term(l));
  return out;
}

// Plausible random values for every slot of a layout.
inline Vec random_theta(const ValidatedModel& m, std::mt19937_64& gen) {
  std::normal_distribution<double> nrm(0.0, 1.0);
  auto unif = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
  const auto& st = m.st;
  Vec th(m.layout.size());
  for (int v = 0; v < m.layout.size(); ++v) {
    const Slot& s = m.layout.slots[v];
    double x = 0.0;
    switch (s.block) {
      case Block::Classmb: x = 0.5 * nrm(gen); break;
      case Block::Zeta: {
        const auto& b = st.baselines[s.cause];
        if (b.kind == BaselineKind::Weibull)
          x = s.index == 0 ? unif(0.3, 0.7) : unif(0.9, 1.3);
        else
          x = unif(0.3, 0.8);
        if (b.logscale) x = std::log(x * x);
        break;
      }
      case Block::PhOffset: x = 0.3 * nrm(gen); break;
      case Block::SurvCommon:
      case Block::SurvMixture: x = 0.4 * nrm(gen); break;
      case Block::Fixed:
      case Block::Mixture: x = 0.7 * nrm(gen); break;
      case Block::Cholesky: {
        bool on_diag = st.idiag;
        for (int j = 0; j < st.q(); ++j)
          if (s.index == j * (j + 1) / 2 + j) on_diag = true;
        if (st.ordinal()) x = on_diag ? unif(0.4, 0.9) : 0.15 * nrm(gen);
        else x = on_diag ? unif(0.5, 1.1) : 0.3 * nrm(gen);
        break;
      }
      case Block::Omega: x = unif(0.6, 1.4); break;
      case Block::Cor: x = unif(0.4, 0.9); break;
      case Block::Contrast: x = 0.3 * nrm(gen); break;
      case Block::RandomY: x = unif(0.3, 0.8); break;
      case Block::Link: {
        const auto& f = st.links[s.marker];
        switch (f.kind) {
          case LinkKind::Linear: x = s.index == 0 ? nrm(gen) : unif(0.6, 2.0); break;
          case LinkKind::Beta:
            x = s.index < 2 ? 0.4 * nrm(gen) : (s.index == 2 ? unif(0.4, 0.6) : unif(0.1, 0.3));
            break;
          case LinkKind::Splines: x = s.index == 0 ? -2.0 + 0.3 * nrm(gen) : unif(0.4, 1.0); break;
          case LinkKind::Thresholds: x = s.index == 0 ? -0.8 + 0.3 * nrm(gen) : unif(0.6, 1.0); break;
          case LinkKind::Identity: break;
        }
        break;
      }
      case Block::Sigma: x = unif(0.6, 1.4); break;
    }
    th[v] = x;
  }
  return th;
}

struct Instance {
  ModelSpec spec;
  DataTable data;
};

inline int pick(std::mt19937_64& gen, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
inline bool coin(std::mt19937_64& gen, double p = 0.5) { return std::bernoulli_distribution(p)(gen); }

// Small random longitudinal data: ids, sorted visit times and two covariates.
struct LongData {
  std::vector<double> id, t, x1, x2;
  std::vector<int> subject_of_row;
};

inline LongData random_long(std::mt19937_64& gen, int n, int max_visits) {
  LongData d;
  std::normal_distribution<double> nrm(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const int ni = pick(gen, 1, max_visits);
    const double x2 = coin(gen) ? 1.0 : 0.0;
    double t = std::uniform_real_distribution<double>(0.0, 0.5)(gen);
    for (int j = 0; j < ni; ++j) {
      d.id.push_back(i + 1);
      d.t.push_back(t);
      d.x1.push_back(nrm(gen));
      d.x2.push_back(x2);
      d.subject_of_row.push_back(i);
      t += std::uniform_real_distribution<double>(0.3, 1.0)(gen);
    }
  }
  return d;
}

inline std::vector<Term> random_subset(std::mt19937_64& gen, const std::vector<Term>& pool, int max_size,
                                       bool keep_first) {
  std::vector<Term> out;
  for (std::size_t i = 0; i < pool.size() && static_cast<int>(out.size()) < max_size; ++i)
    if ((keep_first && i == 0) || coin(gen)) out.push_back(pool[i]);
  return out;
}

inline void random_structure(std::mt19937_64& gen, ModelSpec& s, bool allow_cor, int max_q,
                             const char* last_random = "x1") {
  s.subject = "id";
  s.time = "t";
  s.fixed = terms({"1", "t", "x1"});
  s.ng = pick(gen, 1, 3);
  if (s.ng > 1) {
    s.mixture = random_subset(gen, s.fixed, 3, false);
    if (s.mixture.empty()) s.mixture = terms({"1"});
    if (coin(gen)) s.classmb = terms({"x2"});
  }
  const bool ri_first = s.family == Family::Multlcmm;
  std::vector<Term> pool = terms({"1", "t"});
  if (last_random) pool.push_back(parse_term(last_random));
  s.random = random_subset(gen, pool, max_q, ri_first);
  s.idiag = !s.random.empty() && coin(gen, 0.3);
  s.nwg = s.ng > 1 && !s.random.empty() && coin(gen, 0.4);
  if (allow_cor) {
    const int c = pick(gen, 0, 3);
    s.cor = c == 1 ? CorKind::BM : (c == 2 ? CorKind::AR : CorKind::None);
  }
}

inline Instance random_hlme(std::mt19937_64& gen) {
  Instance in;
  in.spec.family = Family::Hlme;
  random_structure(gen, in.spec, true, 3);
  in.spec.outcomes = {"y"};
  const auto d = random_long(gen, pick(gen, 2, 5), 4);
  std::vector<double> y;
  std::normal_distribution<double> nrm(0.0, 1.5);
  for (std::size_t r = 0; r < d.t.size(); ++r) y.push_back(nrm(gen) + d.t[r]);
  in.data = make_table({"id", "t", "x1", "x2", "y"}, {d.id, d.t, d.x1, d.x2, y});
  return in;
}

inline LinkSpec random_link(std::mt19937_64& gen, bool allow_thresholds) {
  LinkSpec l;
  const int k = pick(gen, 0, allow_thresholds ? 3 : 2);
  l.descriptor = k == 0 ? "linear" : (k == 1 ? "beta" : (k == 2 ? "3-equi-splines" : "thresholds"));
  if (k == 2 && coin(gen)) l.descriptor = "4-equi-splines";
  return l;
}

inline Instance random_lcmm(std::mt19937_64& gen) {
  Instance in;
  in.spec.family = Family::Lcmm;
  LinkSpec link = random_link(gen, true);
  const bool ordinal = link.descriptor == "thresholds";
  // ordinal instances keep the latent spread moderate, where the 30-point rule is accurate
  random_structure(gen, in.spec, !ordinal, ordinal ? 2 : 3, ordinal ? nullptr : "x1");
  in.spec.outcomes = {"y"};
  in.spec.links = {link};
  auto d = random_long(gen, pick(gen, 2, 5), 4);
  if (ordinal)
    for (double& t : d.t) t /= 3.0;
  std::vector<double> y;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (std::size_t r = 0; r < d.t.size(); ++r) y.push_back(ordinal ? std::floor(u(gen) / 2.6) : u(gen));
  if (ordinal) {
    // every level present
    for (std::size_t r = 0; r < y.size() && r < 4; ++r) y[r] = static_cast<double>(r);
  } else {
    y[0] = 0.0;
    y[y.size() - 1] = 10.0;
  }
  in.data = make_table({"id", "t", "x1", "x2", "y"}, {d.id, d.t, d.x1, d.x2, y});
  return in;
}

inline Instance random_multlcmm(std::mt19937_64& gen) {
  Instance in;
  in.spec.family = Family::Multlcmm;
  random_structure(gen, in.spec, true, 3);
  in.spec.outcomes = {"y1", "y2"};
  in.spec.links = {random_link(gen, false), random_link(gen, false)};
  in.spec.random_y = coin(gen);
  if (coin(gen)) in.spec.contrasts = terms({"x2"});
  // mixture on the intercept is absorbed by the links; keep the structure anyway
  const auto d = random_long(gen, pick(gen, 2, 5), 3);
  std::vector<double> y1, y2;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (std::size_t r = 0; r < d.t.size(); ++r) {
    y1.push_back(u(gen));
    y2.push_back(coin(gen, 0.15) ? std::nan("") : u(gen));
  }
  y1[0] = 0.0;
  y1[y1.size() - 1] = 10.0;
  y2[0] = 0.0;
  y2[y2.size() - 1] = 10.0;
  in.data = make_table({"id", "t", "x1", "x2", "y1", "y2"}, {d.id, d.t, d.x1, d.x2, y1, y2});
  return in;
}

inline Instance random_joint(std::mt19937_64& gen) {
  Instance in;
  in.spec.family = Family::Jointlcmm;
  random_structure(gen, in.spec, coin(gen, 0.3), 3);
  in.spec.outcomes = {"y"};
  if (coin(gen, 0.3)) in.spec.links = {LinkSpec{"linear", {}, std::nullopt}};
  SurvivalSpec sv;
  sv.time = "T";
  sv.event = "E";
  sv.causes = pick(gen, 1, 2);
  const int hz = pick(gen, 0, 2);
  sv.hazard = {hz == 0 ? "Weibull" : (hz == 1 ? "3-equi-piecewise" : "3-equi-splines")};
  if (sv.causes == 2 && coin(gen)) sv.hazard = {sv.hazard[0], "Weibull"};
  const int ht = pick(gen, 0, 2);
  sv.hazardtype = ht == 0 ? HazardType::Specific : (ht == 1 ? HazardType::PH : HazardType::Common);
  sv.logscale = coin(gen);
  const bool delayed = coin(gen, 0.4);
  if (delayed) sv.entry = "T0";
  SurvTermSpec a;
  a.term = parse_term("x2");
  a.scope = sv.causes > 1 && coin(gen) ? CauseScope::Each : CauseScope::All;
  a.mixture = in.spec.ng > 1 && coin(gen);
  sv.terms.push_back(a);
  if (coin(gen)) {
    SurvTermSpec b;
    b.term = parse_term("w");
    if (sv.causes > 1 && coin(gen)) {
      b.scope = CauseScope::Single;
      b.cause = 2;
    }
    sv.terms.push_back(b);
  }
  in.spec.survival = sv;

  const int n = pick(gen, 2, 5);
  const auto d = random_long(gen, n, 4);
  std::vector<double> y, T(d.t.size()), E(d.t.size()), T0(d.t.size()), w(d.t.size());
  std::normal_distribution<double> nrm(0.0, 1.5);
  for (std::size_t r = 0; r < d.t.size(); ++r) y.push_back(nrm(gen) + d.t[r]);
  std::vector<double> ti(n, 0.0), ei(n), t0(n), wi(n);
  for (std::size_t r = 0; r < d.t.size(); ++r) ti[d.subject_of_row[r]] = std::max(ti[d.subject_of_row[r]], d.t[r]);
  for (int i = 0; i < n; ++i) {
    ti[i] += std::uniform_real_distribution<double>(0.2, 1.5)(gen);
    ei[i] = pick(gen, 0, sv.causes);
    t0[i] = delayed ? std::uniform_real_distribution<double>(0.0, 0.3)(gen) : 0.0;
    wi[i] = nrm(gen);
  }
  ei[0] = 1;
  for (std::size_t r = 0; r < d.t.size(); ++r) {
    const int i = d.subject_of_row[r];
    T[r] = ti[i];
    E[r] = ei[i];
    T0[r] = t0[i];
    w[r] = wi[i];
  }
  in.data = make_table({"id", "t", "x1", "x2", "y", "T", "E", "T0", "w"}, {d.id, d.t, d.x1, d.x2, y, T, E, T0, w});
  return in;
}

}  // namespace testing_util

namespace testing_util {

// Cohort-like table with the columns used by the spec files in tests/data.
inline DataTable cohort_like(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> id, mmse, cesd, age, cep, male, entry, tdem, dem;
  for (int i = 0; i < n; ++i) {
    const double a0 = 0.5 + 1.5 * u(gen);
    const double c = u(gen) < 0.7 ? 1.0 : 0.0, s = u(gen) < 0.4 ? 1.0 : 0.0;
    const double t = a0 + 0.3 + 2.0 * u(gen);
    const double e = u(gen) < 0.3 ? 1.0 : 0.0;
    const double b0 = 70.0 + 10.0 * nrm(gen), b1 = -3.0 + 2.0 * nrm(gen);
    for (double a = a0; a < t; a += 0.3 + 0.2 * u(gen)) {
      id.push_back(i + 1);
      age.push_back(a);
      mmse.push_back(b0 + b1 * a + 5.0 * c + 3.0 * nrm(gen));
      cesd.push_back(std::clamp(std::round(10.0 + 6.0 * nrm(gen) + 2.0 * s), 0.0, 52.0));
      cep.push_back(c);
      male.push_back(s);
      entry.push_back(a0);
      tdem.push_back(t);
      dem.push_back(e);
    }
  }
  return make_table({"ID", "normMMSE", "CESD", "age65", "CEP", "male", "age_init", "agedem", "dem"},
                    {id, mmse, cesd, age, cep, male, entry, tdem, dem});
}

}  // namespace testing_util
