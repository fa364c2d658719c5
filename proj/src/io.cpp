#include "latmix/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "latmix/error.hpp"

namespace latmix {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& s) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (s.empty() || s == "NA" || s == "NaN" || s == "." || s == "nan") return nan;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) return nan;
  while (*end == ' ') ++end;
  return *end == '\0' ? v : nan;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string quote_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

DataTable parse_csv(std::istream& in) {
  DataTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV input");
  t.names = split_csv_line(line);
  const std::size_t nc = t.names.size();
  t.numeric.assign(nc, {});
  t.text.assign(nc, {});
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != nc)
      throw Error("CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                  " fields, expected " + std::to_string(nc));
    for (std::size_t c = 0; c < nc; ++c) {
      t.numeric[c].push_back(parse_cell(cells[c]));
      t.text[c].push_back(std::move(cells[c]));
    }
  }
  return t;
}

DataTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file '" + path + "'");
  return parse_csv(in);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_rows(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << quote_cell(header[c]);
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << quote_cell(r[c]);
    out << '\n';
  }
}

void write_csv(std::ostream& out, const DataTable& t) {
  std::vector<std::vector<std::string>> rows(t.rows(), std::vector<std::string>(t.cols()));
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) {
      const double v = t.numeric[c][r];
      rows[r][c] = std::isnan(v) ? (t.text[c][r].empty() ? "NA" : t.text[c][r]) : format_double(v);
    }
  write_rows(out, t.names, rows);
}

namespace {

std::vector<Term> terms_from(const json& j, const char* key) {
  std::vector<Term> out;
  if (!j.contains(key)) return out;
  for (const auto& t : j.at(key)) out.push_back(parse_term(t.get<std::string>()));
  return out;
}

json terms_to(const std::vector<Term>& v) {
  json a = json::array();
  for (const auto& t : v) {
    std::string s = t.is_intercept() ? "1" : t.factors[0];
    for (std::size_t i = 1; i < t.factors.size(); ++i) s += ":" + t.factors[i];
    a.push_back(s);
  }
  return a;
}

LinkSpec link_from(const json& j) {
  LinkSpec l;
  if (j.is_string()) {
    l.descriptor = j.get<std::string>();
    return l;
  }
  l.descriptor = j.value("type", std::string("linear"));
  if (j.contains("intnodes")) l.intnodes = j.at("intnodes").get<std::vector<double>>();
  if (j.contains("range")) {
    const auto r = j.at("range").get<std::vector<double>>();
    if (r.size() != 2) throw Error("link range needs two values");
    l.range = std::make_pair(r[0], r[1]);
  }
  return l;
}

}  // namespace

ModelSpec spec_from_json(const json& j) {
  static const std::set<std::string> known = {
      "family", "subject", "time", "outcome", "outcomes", "fixed", "mixture", "random", "classmb",
      "contrasts", "ng", "idiag", "nwg", "randomY", "cor", "link", "epsY", "survival", "gh_points",
      "max_gh_dim"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw Error("unknown model key '" + it.key() + "'");
  ModelSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.subject = j.at("subject").get<std::string>();
  s.time = j.at("time").get<std::string>();
  if (j.contains("outcomes")) s.outcomes = j.at("outcomes").get<std::vector<std::string>>();
  else if (j.contains("outcome")) s.outcomes = {j.at("outcome").get<std::string>()};
  s.fixed = terms_from(j, "fixed");
  s.mixture = terms_from(j, "mixture");
  s.random = terms_from(j, "random");
  s.classmb = terms_from(j, "classmb");
  s.contrasts = terms_from(j, "contrasts");
  s.ng = j.value("ng", 1);
  s.idiag = j.value("idiag", false);
  s.nwg = j.value("nwg", false);
  s.random_y = j.value("randomY", false);
  s.eps_y = j.value("epsY", 0.5);
  s.gh_points = j.value("gh_points", 30);
  s.max_gh_dim = j.value("max_gh_dim", 3);
  if (j.contains("cor") && !j.at("cor").is_null()) {
    const auto& c = j.at("cor");
    const std::string type = c.is_string() ? c.get<std::string>() : c.at("type").get<std::string>();
    if (type == "BM") s.cor = CorKind::BM;
    else if (type == "AR") s.cor = CorKind::AR;
    else throw Error("unknown correlation process '" + type + "'");
    if (c.is_object() && c.contains("time")) s.cor_time = c.at("time").get<std::string>();
  }
  if (j.contains("link")) {
    const auto& l = j.at("link");
    if (l.is_array()) {
      for (const auto& e : l) s.links.push_back(link_from(e));
    } else {
      for (std::size_t k = 0; k < s.outcomes.size(); ++k) s.links.push_back(link_from(l));
    }
  } else if (s.family == Family::Lcmm || s.family == Family::Multlcmm) {
    s.links.assign(s.outcomes.size(), LinkSpec{});
  }
  if (j.contains("survival")) {
    const auto& v = j.at("survival");
    SurvivalSpec sv;
    sv.entry = v.value("entry", std::string());
    sv.time = v.at("time").get<std::string>();
    sv.event = v.at("event").get<std::string>();
    sv.causes = v.value("causes", 1);
    if (v.contains("terms")) {
      for (const auto& t : v.at("terms")) {
        SurvTermSpec st;
        if (t.is_string()) {
          st.term = parse_term(t.get<std::string>());
        } else {
          st.term = parse_term(t.at("term").get<std::string>());
          st.mixture = t.value("mixture", false);
          if (t.contains("cause")) {
            const auto& c = t.at("cause");
            if (c.is_number_integer()) {
              st.scope = CauseScope::Single;
              st.cause = c.get<int>();
            } else {
              const auto cs = c.get<std::string>();
              if (cs == "all") st.scope = CauseScope::All;
              else if (cs == "each") st.scope = CauseScope::Each;
              else throw Error("survival term cause must be \"all\", \"each\" or a cause number");
            }
          }
        }
        sv.terms.push_back(st);
      }
    }
    if (v.contains("hazard")) {
      const auto& h = v.at("hazard");
      sv.hazard = h.is_array() ? h.get<std::vector<std::string>>() : std::vector<std::string>{h.get<std::string>()};
    }
    if (v.contains("hazardnodes")) {
      const auto& h = v.at("hazardnodes");
      if (!h.empty() && h[0].is_number()) sv.hazardnodes = {h.get<std::vector<double>>()};
      else sv.hazardnodes = h.get<std::vector<std::vector<double>>>();
    }
    sv.hazardtype = parse_hazard_type(v.value("hazardtype", std::string("Specific")));
    sv.logscale = v.value("logscale", false);
    s.survival = sv;
  }
  return s;
}

json spec_to_json(const ModelSpec& s) {
  json j;
  j["family"] = to_string(s.family);
  j["subject"] = s.subject;
  j["time"] = s.time;
  j["outcomes"] = s.outcomes;
  j["fixed"] = terms_to(s.fixed);
  j["mixture"] = terms_to(s.mixture);
  j["random"] = terms_to(s.random);
  j["classmb"] = terms_to(s.classmb);
  j["contrasts"] = terms_to(s.contrasts);
  j["ng"] = s.ng;
  j["idiag"] = s.idiag;
  j["nwg"] = s.nwg;
  j["randomY"] = s.random_y;
  j["epsY"] = s.eps_y;
  j["gh_points"] = s.gh_points;
  j["max_gh_dim"] = s.max_gh_dim;
  if (s.cor != CorKind::None) {
    j["cor"] = {{"type", s.cor == CorKind::BM ? "BM" : "AR"}};
    if (!s.cor_time.empty()) j["cor"]["time"] = s.cor_time;
  }
  if (!s.links.empty()) {
    json l = json::array();
    for (const auto& e : s.links) {
      json o = {{"type", e.descriptor}};
      if (!e.intnodes.empty()) o["intnodes"] = e.intnodes;
      if (e.range) o["range"] = {e.range->first, e.range->second};
      l.push_back(o);
    }
    j["link"] = l;
  }
  if (s.survival) {
    const auto& sv = *s.survival;
    json v;
    if (!sv.entry.empty()) v["entry"] = sv.entry;
    v["time"] = sv.time;
    v["event"] = sv.event;
    v["causes"] = sv.causes;
    json terms = json::array();
    for (const auto& t : sv.terms) {
      json o;
      o["term"] = terms_to({t.term})[0];
      o["mixture"] = t.mixture;
      if (t.scope == CauseScope::Single) o["cause"] = t.cause;
      else o["cause"] = t.scope == CauseScope::All ? "all" : "each";
      terms.push_back(o);
    }
    v["terms"] = terms;
    v["hazard"] = sv.hazard;
    if (!sv.hazardnodes.empty()) v["hazardnodes"] = sv.hazardnodes;
    v["hazardtype"] = to_string(sv.hazardtype);
    v["logscale"] = sv.logscale;
    j["survival"] = v;
  }
  return j;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("cannot parse '" + path + "': " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

ModelSpec read_spec(const std::string& path) {
  try {
    return spec_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw Error("invalid model file '" + path + "': " + e.what());
  }
}

json data_fingerprint(const ValidatedModel& m, const DataTable& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_d = [&](double x) { h = fnv1a(h, &x, sizeof x); };
  auto mix_m = [&](const Mat& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) mix_d(a(i, j));
  };
  for (const auto& s : m.subjects) {
    h = fnv1a(h, s.id.data(), s.id.size());
    for (double t : s.times) mix_d(t);
    mix_m(s.x_fixed);
    mix_m(s.z);
    mix_m(s.y);
    mix_m(s.x_contrast);
    if (s.has_survival) {
      mix_d(s.entry);
      mix_d(s.event_time);
      mix_d(s.event);
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return {{"rows", data.rows()},
          {"subjects", m.counts.subjects},
          {"observations", m.counts.observations},
          {"columns", data.names},
          {"hash", buf}};
}

bool fingerprint_matches(const json& archive, const ValidatedModel& m, const DataTable& data) {
  if (!archive.contains("fingerprint")) return false;
  const json fp = data_fingerprint(m, data);
  const json& a = archive.at("fingerprint");
  return a.value("hash", std::string()) == fp.at("hash").get<std::string>() &&
         a.value("subjects", -1) == fp.at("subjects").get<int>();
}

json archive_to_json(const FittedModel& fm, const DataTable& data, const Vec& class_proportions) {
  const auto& m = *fm.model;
  json a;
  a["format"] = "latmix-fit";
  a["version"] = 1;
  a["spec"] = spec_to_json(m.spec);
  json params = json::array();
  const Vec se = fm.se();
  for (int v = 0; v < fm.theta.size(); ++v) {
    params.push_back({{"name", m.layout.slots[v].name},
                      {"block", to_string(m.layout.slots[v].block)},
                      {"value", fm.theta[v]},
                      {"free", fm.is_free(v)}});
  }
  a["parameters"] = params;
  if (fm.has_cov()) {
    std::vector<double> upper;
    for (int j = 0; j < fm.theta.size(); ++j)
      for (int i = 0; i <= j; ++i) upper.push_back(fm.cov()(i, j));
    a["covariance_upper"] = upper;
  } else {
    a["covariance_upper"] = nullptr;
  }
  {
    std::vector<double> hupper;
    for (int j = 0; j < fm.theta.size(); ++j)
      for (int i = 0; i <= j; ++i) hupper.push_back(fm.opt.hessian(i, j));
    a["hessian_upper"] = hupper;
  }
  a["loglik"] = fm.loglik();
  a["aic"] = fm.aic();
  a["bic"] = fm.bic();
  a["n_free"] = fm.n_free();
  a["convergence"] = {{"status", to_string(fm.opt.status)},
                      {"converged", fm.opt.converged()},
                      {"iterations", fm.opt.iterations},
                      {"message", fm.opt.message},
                      {"criteria",
                       {{"parameters", fm.opt.crit_params},
                        {"likelihood", fm.opt.crit_loglik},
                        {"derivatives", fm.opt.crit_deriv}}},
                      {"settings",
                       {{"convB", fm.conv.eps_a},
                        {"convL", fm.conv.eps_b},
                        {"convG", fm.conv.eps_d},
                        {"maxiter", fm.conv.maxiter}}},
                      {"derivative_hessian", fm.opt.deriv_inflated ? "inflated" : "raw"},
                      {"trace", fm.opt.trace}};
  a["class_proportions"] = std::vector<double>(class_proportions.data(),
                                               class_proportions.data() + class_proportions.size());
  a["fingerprint"] = data_fingerprint(m, data);
  a["grid_logliks"] = fm.grid_logliks;
  a["notes"] = fm.notes;
  return a;
}

namespace {

OptStatus status_from(const std::string& s) {
  if (s == to_string(OptStatus::Converged)) return OptStatus::Converged;
  if (s == to_string(OptStatus::MaxIter)) return OptStatus::MaxIter;
  return OptStatus::Failed;
}

}  // namespace

FittedModel fitted_from_archive(const json& a, std::shared_ptr<const ValidatedModel> m) {
  if (a.value("format", std::string()) != "latmix-fit") throw Error("not a fit archive");
  if (a.value("version", 0) != 1) throw Error("unsupported archive version");
  FittedModel fm;
  fm.model = m;
  const auto& params = a.at("parameters");
  const int n = m->layout.size();
  if (static_cast<int>(params.size()) != n)
    throw Error("archive has " + std::to_string(params.size()) + " parameters, model has " + std::to_string(n));
  fm.theta = Vec(n);
  fm.mask.assign(n, true);
  bool any_fixed = false;
  for (int v = 0; v < n; ++v) {
    if (params[v].at("name").get<std::string>() != m->layout.slots[v].name)
      throw Error("archive parameter '" + params[v].at("name").get<std::string>() + "' does not match the model");
    fm.theta[v] = params[v].at("value").get<double>();
    fm.mask[v] = params[v].at("free").get<bool>();
    any_fixed |= !fm.mask[v];
  }
  if (!any_fixed) fm.mask.clear();
  fm.opt.theta = fm.theta;
  fm.opt.loglik = a.at("loglik").get<double>();
  const auto& c = a.at("convergence");
  fm.opt.status = status_from(c.at("status").get<std::string>());
  fm.opt.iterations = c.at("iterations").get<int>();
  fm.opt.message = c.value("message", std::string());
  fm.opt.crit_params = c.at("criteria").at("parameters").get<double>();
  fm.opt.crit_loglik = c.at("criteria").at("likelihood").get<double>();
  fm.opt.crit_deriv = c.at("criteria").at("derivatives").get<double>();
  fm.opt.deriv_inflated = c.value("derivative_hessian", std::string("raw")) == "inflated";
  fm.opt.trace = c.value("trace", std::vector<double>{});
  if (c.contains("settings")) {
    const auto& s = c.at("settings");
    fm.conv.eps_a = s.at("convB").get<double>();
    fm.conv.eps_b = s.at("convL").get<double>();
    fm.conv.eps_d = s.at("convG").get<double>();
    fm.conv.maxiter = s.at("maxiter").get<int>();
  }
  auto unpack_upper = [n](const std::vector<double>& u) {
    Mat x(n, n);
    std::size_t e = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) x(i, j) = x(j, i) = u.at(e++);
    return x;
  };
  fm.opt.hessian = unpack_upper(a.at("hessian_upper").get<std::vector<double>>());
  if (!a.at("covariance_upper").is_null())
    fm.opt.covariance = unpack_upper(a.at("covariance_upper").get<std::vector<double>>());
  fm.grid_logliks = a.value("grid_logliks", std::vector<double>{});
  fm.notes = a.value("notes", std::vector<std::string>{});
  return fm;
}

}  // namespace latmix
