#include "latmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "latmix/error.hpp"

namespace latmix {

std::string to_string(Family f) {
  switch (f) {
    case Family::Hlme: return "hlme";
    case Family::Lcmm: return "lcmm";
    case Family::Multlcmm: return "multlcmm";
    case Family::Jointlcmm: return "jointlcmm";
  }
  return "hlme";
}

Family parse_family(const std::string& s) {
  if (s == "hlme") return Family::Hlme;
  if (s == "lcmm") return Family::Lcmm;
  if (s == "multlcmm") return Family::Multlcmm;
  if (s == "jointlcmm" || s == "Jointlcmm") return Family::Jointlcmm;
  throw Error("unknown model family '" + s + "'");
}

int default_maxiter(Family f) { return f == Family::Hlme ? 500 : 100; }

std::string Term::label() const {
  if (factors.empty()) return "intercept";
  std::string s = factors[0];
  for (std::size_t i = 1; i < factors.size(); ++i) s += ":" + factors[i];
  return s;
}

Term parse_term(const std::string& s) {
  Term t;
  if (s == "1" || s == "intercept" || s.empty()) return t;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(':', start);
    const std::string f = s.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (f.empty()) throw Error("malformed term '" + s + "'");
    t.factors.push_back(f);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return t;
}

int DataTable::column(const std::string& name) const {
  for (int c = 0; c < cols(); ++c)
    if (names[c] == name) return c;
  return -1;
}

double term_value(const DataTable& data, const Term& t, int row) {
  double v = 1.0;
  for (const auto& f : t.factors) {
    const int c = data.column(f);
    if (c < 0) throw Error("unknown covariate '" + f + "'");
    v *= data.numeric[c][row];
  }
  return v;
}

std::vector<int> subject_time_order(const DataTable& data, const std::string& subject,
                                    const std::string& time) {
  const int cs = data.column(subject);
  const int ct = data.column(time);
  if (cs < 0) throw Error("unknown subject column '" + subject + "'");
  if (ct < 0) throw Error("unknown time column '" + time + "'");
  const int n = data.rows();
  bool numeric_ids = true;
  for (int r = 0; r < n; ++r)
    if (!std::isfinite(data.numeric[cs][r])) numeric_ids = false;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (numeric_ids) {
      const double ia = data.numeric[cs][a], ib = data.numeric[cs][b];
      if (ia != ib) return ia < ib;
    } else {
      const auto& ia = data.text[cs][a];
      const auto& ib = data.text[cs][b];
      if (ia != ib) return ia < ib;
    }
    const double ta = data.numeric[ct][a], tb = data.numeric[ct][b];
    if (std::isnan(ta) || std::isnan(tb)) return !std::isnan(ta) && std::isnan(tb);
    return ta < tb;
  });
  return order;
}

namespace {

void require_column(const DataTable& d, const std::string& name) {
  if (d.column(name) < 0) throw Error("unknown covariate '" + name + "'");
}

void require_terms(const DataTable& d, const std::vector<Term>& terms) {
  for (const auto& t : terms)
    for (const auto& f : t.factors) require_column(d, f);
}

bool contains(const std::vector<Term>& v, const Term& t) {
  return std::find(v.begin(), v.end(), t) != v.end();
}

void check_spec(const ModelSpec& s) {
  if (s.ng < 1) throw Error("ng must be at least 1");
  if (s.outcomes.empty()) throw Error("at least one outcome is required");
  if (s.ng == 1 && !s.mixture.empty()) throw Error("mixture terms require ng > 1");
  for (const auto& m : s.mixture)
    if (!contains(s.fixed, m)) throw Error("mixture term '" + m.label() + "' is not among the fixed terms");
  {
    std::set<std::string> seen;
    for (const auto& t : s.fixed)
      if (!seen.insert(t.label()).second) throw Error("duplicated fixed term '" + t.label() + "'");
  }
  if (!s.contrasts.empty() && s.family != Family::Multlcmm)
    throw Error("contrasts are only available in multlcmm");
  if (s.random_y && s.family != Family::Multlcmm) throw Error("randomY is only available in multlcmm");
  if (s.survival && s.family != Family::Jointlcmm)
    throw Error("a survival model is only available in jointlcmm");
  if (s.family == Family::Jointlcmm && !s.survival) throw Error("jointlcmm needs a survival model");
  if (s.family != Family::Multlcmm && s.outcomes.size() != 1)
    throw Error(to_string(s.family) + " takes exactly one outcome");
  if (s.family == Family::Hlme && !s.links.empty()) throw Error("hlme takes no link function");
  if (!s.links.empty() && s.links.size() != s.outcomes.size())
    throw Error("one link per outcome is required");
  if (s.family == Family::Multlcmm) {
    if (s.random.empty() || !s.random[0].is_intercept())
      throw Error("multlcmm requires a random intercept as the first random term");
  }
  for (const auto& l : s.links) {
    const auto d = parse_link_descriptor(l.descriptor);
    if (d.kind == LinkKind::Thresholds) {
      if (s.family != Family::Lcmm) throw Error("thresholds links are only available in lcmm");
      if (s.cor != CorKind::None) throw Error("thresholds links cannot be combined with a BM/AR process");
      if (static_cast<int>(s.random.size()) > s.max_gh_dim)
        throw Error("thresholds link: too many random effects for the tensor Gauss-Hermite rule (max_gh_dim)");
    }
  }
  if (!(s.eps_y > 0.0)) throw Error("epsY must be positive");
  if (s.survival) {
    const auto& sv = *s.survival;
    if (sv.causes < 1) throw Error("survival model needs at least one cause");
    if (sv.hazard.size() != 1 && static_cast<int>(sv.hazard.size()) != sv.causes)
      throw Error("give one hazard descriptor, or one per cause");
    for (const auto& t : sv.terms) {
      if (t.mixture && s.ng == 1) throw Error("class-specific survival effects require ng > 1");
      if (t.scope == CauseScope::Single && (t.cause < 1 || t.cause > sv.causes))
        throw Error("survival term '" + t.term.label() + "' names an invalid cause");
      if (t.term.is_intercept()) throw Error("survival terms cannot include an intercept");
    }
  }
}

struct BuildResult {
  std::vector<SubjectData> subjects;
  DatasetCounts counts;
  std::vector<std::vector<double>> marker_values;
};

// In prediction mode outcome and survival columns may be absent and subjects
// without observations are kept.
BuildResult build_subjects(const ModelSpec& spec, int P, const DataTable& data, bool prediction) {
  const int K = static_cast<int>(spec.outcomes.size());
  const std::string cor_time = spec.cor_time.empty() ? spec.time : spec.cor_time;
  require_column(data, spec.subject);
  require_column(data, spec.time);
  if (!prediction)
    for (const auto& o : spec.outcomes) require_column(data, o);
  require_terms(data, spec.fixed);
  require_terms(data, spec.random);
  require_terms(data, spec.classmb);
  require_terms(data, spec.contrasts);
  if (spec.cor != CorKind::None) require_column(data, cor_time);

  int c_entry = -1, c_time = -1, c_event = -1;
  std::vector<Term> surv_terms;
  if (spec.survival) {
    const auto& sv = *spec.survival;
    if (!prediction) {
      if (!sv.entry.empty()) require_column(data, sv.entry);
      require_column(data, sv.time);
      require_column(data, sv.event);
    }
    if (!sv.entry.empty()) c_entry = data.column(sv.entry);
    c_time = data.column(sv.time);
    c_event = data.column(sv.event);
    for (const auto& t : sv.terms) {
      require_terms(data, {t.term});
      surv_terms.push_back(t.term);
    }
  }
  const bool with_survival = spec.survival && c_time >= 0 && c_event >= 0;

  const auto order = subject_time_order(data, spec.subject, spec.time);
  const int cs = data.column(spec.subject);
  const int ct = data.column(spec.time);
  const int cct = spec.cor != CorKind::None ? data.column(cor_time) : ct;
  std::vector<int> cy;
  for (const auto& o : spec.outcomes) cy.push_back(data.column(o));

  auto same_id = [&](int a, int b) {
    if (std::isfinite(data.numeric[cs][a]) && std::isfinite(data.numeric[cs][b]))
      return data.numeric[cs][a] == data.numeric[cs][b];
    return data.text[cs][a] == data.text[cs][b];
  };

  BuildResult out;
  DatasetCounts& counts = out.counts;
  counts.events.assign(P, 0);
  out.marker_values.assign(K, {});
  const int p = static_cast<int>(spec.fixed.size()), q = static_cast<int>(spec.random.size());
  const int nc = static_cast<int>(spec.contrasts.size());

  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && same_id(order[start], order[end])) ++end;
    const int first = order[start];

    SubjectData sd;
    sd.id = data.text[cs][first];
    bool subject_ok = true;

    sd.x_class = Vec::Ones(1 + static_cast<int>(spec.classmb.size()));
    for (std::size_t t = 0; t < spec.classmb.size(); ++t) {
      const double v = term_value(data, spec.classmb[t], first);
      for (std::size_t r = start; r < end; ++r)
        if (term_value(data, spec.classmb[t], order[r]) != v && std::isfinite(v))
          throw Error("class-membership covariate '" + spec.classmb[t].label() +
                      "' varies within subject " + sd.id);
      if (!std::isfinite(v)) subject_ok = false;
      sd.x_class[t + 1] = v;
    }
    if (spec.survival) {
      auto constant = [&](int col, const std::string& what) {
        const double v = data.numeric[col][first];
        for (std::size_t r = start; r < end; ++r)
          if (data.numeric[col][order[r]] != v && !(std::isnan(v) && std::isnan(data.numeric[col][order[r]])))
            throw Error("survival column '" + what + "' varies within subject " + sd.id);
        return v;
      };
      sd.x_surv = Vec(static_cast<int>(surv_terms.size()));
      for (std::size_t t = 0; t < surv_terms.size(); ++t) {
        const double v = term_value(data, surv_terms[t], first);
        for (std::size_t r = start; r < end; ++r)
          if (term_value(data, surv_terms[t], order[r]) != v && std::isfinite(v))
            throw Error("survival covariate '" + surv_terms[t].label() + "' varies within subject " + sd.id);
        sd.x_surv[static_cast<int>(t)] = v;
      }
      if (!sd.x_surv.allFinite()) subject_ok = false;
      if (with_survival) {
        sd.has_survival = true;
        sd.event_time = constant(c_time, spec.survival->time);
        const double ev = constant(c_event, spec.survival->event);
        if (c_entry >= 0) {
          sd.entry = constant(c_entry, spec.survival->entry);
          sd.has_entry = true;
        }
        if (!std::isfinite(sd.event_time) || !std::isfinite(ev) || (sd.has_entry && !std::isfinite(sd.entry))) {
          subject_ok = false;
        } else {
          if (ev != std::round(ev) || ev < 0 || ev > P)
            throw Error("event indicator must be an integer in 0.." + std::to_string(P));
          sd.event = static_cast<int>(ev);
          if (!(sd.event_time > 0.0)) throw Error("event times must be positive (subject " + sd.id + ")");
          if (sd.has_entry && !(sd.entry >= 0.0 && sd.entry < sd.event_time))
            throw Error("entry time must satisfy 0 <= T0 < T (subject " + sd.id + ")");
        }
      }
    }

    std::vector<std::vector<double>> rows_fixed, rows_z, rows_c, rows_y;
    for (std::size_t r = start; r < end; ++r) {
      const int row = order[r];
      bool ok = subject_ok;
      std::vector<double> xf(p), xz(q), xc(nc), yy(K);
      const double t = data.numeric[ct][row];
      const double tc = data.numeric[cct][row];
      if (!std::isfinite(t) || (spec.cor != CorKind::None && !std::isfinite(tc))) ok = false;
      for (int j = 0; j < p && ok; ++j) ok = std::isfinite(xf[j] = term_value(data, spec.fixed[j], row));
      for (int j = 0; j < q && ok; ++j) ok = std::isfinite(xz[j] = term_value(data, spec.random[j], row));
      for (int j = 0; j < nc && ok; ++j) ok = std::isfinite(xc[j] = term_value(data, spec.contrasts[j], row));
      int present = 0;
      for (int k = 0; k < K; ++k) {
        yy[k] = cy[k] >= 0 ? data.numeric[cy[k]][row] : std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(yy[k])) ++present;
      }
      if (present == 0) ok = false;
      if (!ok) {
        counts.deleted_observations += present > 0 ? present : 1;
        continue;
      }
      sd.times.push_back(t);
      sd.cor_times.push_back(spec.cor != CorKind::None ? tc : t);
      rows_fixed.push_back(std::move(xf));
      rows_z.push_back(std::move(xz));
      rows_c.push_back(std::move(xc));
      rows_y.push_back(std::move(yy));
    }
    const int nv = static_cast<int>(rows_fixed.size());
    if (nv == 0 && !(prediction && subject_ok)) {
      ++counts.dropped_subjects;
      start = end;
      continue;
    }
    sd.x_fixed = Mat(nv, p);
    sd.z = Mat(nv, q);
    sd.x_contrast = Mat(nv, nc);
    sd.y = Mat(nv, K);
    for (int v = 0; v < nv; ++v) {
      for (int j = 0; j < p; ++j) sd.x_fixed(v, j) = rows_fixed[v][j];
      for (int j = 0; j < q; ++j) sd.z(v, j) = rows_z[v][j];
      for (int j = 0; j < nc; ++j) sd.x_contrast(v, j) = rows_c[v][j];
      for (int k = 0; k < K; ++k) sd.y(v, k) = rows_y[v][k];
    }
    for (int k = 0; k < K; ++k)
      for (int v = 0; v < nv; ++v)
        if (std::isfinite(sd.y(v, k))) {
          sd.obs.push_back({k, v});
          out.marker_values[k].push_back(sd.y(v, k));
        }
    counts.observations += sd.n_obs();
    if (sd.has_survival && sd.event > 0) ++counts.events[sd.event - 1];
    out.subjects.push_back(std::move(sd));
    start = end;
  }
  counts.subjects = static_cast<int>(out.subjects.size());
  return out;
}

}  // namespace

std::shared_ptr<const ValidatedModel> validate_and_build(const ModelSpec& spec, const DataTable& data) {
  check_spec(spec);
  auto vm = std::make_shared<ValidatedModel>();
  vm->spec = spec;
  ModelStructure& st = vm->st;
  st.family = spec.family;
  st.G = spec.ng;
  st.K = static_cast<int>(spec.outcomes.size());
  st.markers = spec.outcomes;
  st.idiag = spec.idiag;
  st.nwg = spec.nwg && spec.ng > 1;
  st.cor = spec.cor;
  st.random_y = spec.random_y;
  st.gh_points = spec.gh_points;
  st.max_gh_dim = spec.max_gh_dim;
  const bool latent = spec.family == Family::Lcmm || spec.family == Family::Multlcmm ||
                      (spec.family == Family::Jointlcmm && !spec.links.empty());
  st.sigma_free = !(spec.family == Family::Lcmm || (spec.family == Family::Jointlcmm && latent));
  st.chol_first_fixed = spec.family == Family::Multlcmm;

  require_column(data, spec.subject);
  require_column(data, spec.time);
  for (const auto& o : spec.outcomes) require_column(data, o);
  require_terms(data, spec.fixed);
  require_terms(data, spec.random);
  require_terms(data, spec.classmb);
  require_terms(data, spec.contrasts);
  const std::string cor_time = spec.cor_time.empty() ? spec.time : spec.cor_time;
  if (spec.cor != CorKind::None) require_column(data, cor_time);

  for (std::size_t j = 0; j < spec.fixed.size(); ++j) {
    st.fixed_labels.push_back(spec.fixed[j].label());
    st.fixed_mixture.push_back(contains(spec.mixture, spec.fixed[j]));
    if (spec.fixed[j].is_intercept()) st.intercept = static_cast<int>(j);
  }
  st.intercept_constrained = latent && st.intercept >= 0;
  for (const auto& t : spec.random) st.random_labels.push_back(t.label());
  for (const auto& t : spec.classmb) {
    if (t.is_intercept()) throw Error("the class-membership intercept is implicit");
    st.classmb_labels.push_back(t.label());
  }
  for (const auto& t : spec.contrasts) {
    if (t.is_intercept()) throw Error("contrast terms cannot include an intercept");
    st.contrast_labels.push_back(t.label());
  }

  if (spec.survival) {
    const auto& sv = *spec.survival;
    st.P = sv.causes;
    st.hazardtype = sv.hazardtype;
    for (const auto& t : sv.terms) {
      SurvEffect e;
      e.label = t.term.label();
      e.scope = t.scope;
      e.cause = t.cause - 1;
      e.mixture = t.mixture;
      st.surv_effects.push_back(e);
    }
    if (st.G == 1 && st.hazardtype == HazardType::PH) st.hazardtype = HazardType::Specific;
  }

  auto built = build_subjects(spec, st.P, data, false);
  vm->subjects = std::move(built.subjects);
  vm->counts = std::move(built.counts);
  vm->marker_values = std::move(built.marker_values);
  const DatasetCounts& counts = vm->counts;
  if (counts.subjects == 0) throw Error("no subject has usable observations");

  for (int k = 0; k < st.K; ++k) {
    if (spec.links.empty()) {
      LinkFamily f;
      f.kind = LinkKind::Identity;
      st.links.push_back(f);
      continue;
    }
    const auto& ls = spec.links[k];
    st.links.push_back(make_link(parse_link_descriptor(ls.descriptor), vm->marker_values[k],
                                 spec.eps_y, ls.intnodes, ls.range));
  }

  if (spec.survival) {
    const auto& sv = *spec.survival;
    std::vector<double> times;
    double entry_min = 0.0;
    if (!spec.survival->entry.empty()) {
      entry_min = std::numeric_limits<double>::infinity();
      for (const auto& s : vm->subjects) entry_min = std::min(entry_min, s.entry);
    }
    for (const auto& s : vm->subjects) times.push_back(s.event_time);
    for (int c = 0; c < st.P; ++c) {
      const auto d = parse_hazard_descriptor(sv.hazard.size() == 1 ? sv.hazard[0] : sv.hazard[c]);
      std::vector<double> interior;
      if (static_cast<int>(sv.hazardnodes.size()) > c) interior = sv.hazardnodes[c];
      st.baselines.push_back(make_baseline(d, sv.logscale, times, entry_min, interior));
    }
  }

  vm->layout = build_layout(st);
  return vm;
}

std::vector<SubjectData> subjects_for_prediction(const ValidatedModel& m, const DataTable& data) {
  return build_subjects(m.spec, m.st.P, data, true).subjects;
}

}  // namespace latmix
