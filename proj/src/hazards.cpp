#include "latmix/hazards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>

#include "latmix/error.hpp"

namespace latmix {

std::string to_string(HazardType h) {
  switch (h) {
    case HazardType::Specific: return "Specific";
    case HazardType::PH: return "PH";
    case HazardType::Common: return "Common";
  }
  return "Specific";
}

HazardType parse_hazard_type(const std::string& s) {
  if (s == "Specific") return HazardType::Specific;
  if (s == "PH") return HazardType::PH;
  if (s == "Common") return HazardType::Common;
  throw Error("unknown hazardtype '" + s + "'");
}

HazardDescriptor parse_hazard_descriptor(const std::string& s) {
  HazardDescriptor d;
  if (s == "Weibull") return d;
  if (s == "piecewise") {
    d.kind = BaselineKind::Piecewise;
    return d;
  }
  if (s == "splines") {
    d.kind = BaselineKind::Msplines;
    return d;
  }
  static const std::regex re(R"((\d+)-(equi|quant|manual)-(piecewise|splines))");
  std::smatch m;
  if (std::regex_match(s, m, re)) {
    d.kind = m[3] == "piecewise" ? BaselineKind::Piecewise : BaselineKind::Msplines;
    d.nodes = std::stoi(m[1]);
    d.placement = parse_knot_placement(m[2]);
    if (d.nodes < 2) throw Error("hazard knots: at least 2 needed");
    return d;
  }
  throw Error("unknown hazard descriptor '" + s + "'");
}

int Baseline::n_params() const {
  switch (kind) {
    case BaselineKind::Weibull: return 2;
    case BaselineKind::Piecewise: return knots->size() - 1;
    case BaselineKind::Msplines: return basis->size();
  }
  return 0;
}

std::vector<std::string> Baseline::param_names() const {
  std::vector<std::string> out;
  const std::string tr = logscale ? "log(" : "+/-sqrt(";
  const std::string base = kind == BaselineKind::Weibull ? "Weibull"
                           : kind == BaselineKind::Piecewise ? "piecewise" : "splines";
  for (int l = 0; l < n_params(); ++l) out.push_back(tr + base + std::to_string(l + 1) + ")");
  return out;
}

double Baseline::lo() const { return knots ? knots->lo() : 0.0; }
double Baseline::hi() const {
  return knots ? knots->hi() : std::numeric_limits<double>::infinity();
}

namespace {

void check_time(const Baseline& b, double t) {
  if (!(t >= 0.0)) throw Error("hazard evaluated at a negative or undefined time");
  if (b.knots) {
    const double tol = 1e-10 * std::max(1.0, b.hi() - b.lo());
    if (t < b.lo() - tol || t > b.hi() + tol)
      throw Error("time " + std::to_string(t) + " outside the baseline hazard knot range");
  }
}

int piece_index(const KnotVector& k, double t) {
  const int n = k.size() - 1;
  for (int l = 0; l < n - 1; ++l)
    if (t < k.knots[l + 1]) return l;
  return n - 1;
}

}  // namespace

double Baseline::hazard(double t, std::span<const double> raw) const {
  check_time(*this, t);
  switch (kind) {
    case BaselineKind::Weibull: {
      const double z1 = transform(raw[0]), z2 = transform(raw[1]);
      if (logscale) return z1 * z2 * std::pow(t, z2 - 1.0);
      return z1 * z2 * std::pow(z1 * t, z2 - 1.0);
    }
    case BaselineKind::Piecewise:
      return transform(raw[piece_index(*knots, std::clamp(t, lo(), hi()))]);
    case BaselineKind::Msplines: {
      const auto m = basis->mspline(t, true);
      double s = 0.0;
      for (std::size_t l = 0; l < m.size(); ++l) s += transform(raw[l]) * m[l];
      return s;
    }
  }
  return 0.0;
}

double Baseline::cumulative(double t, std::span<const double> raw) const {
  check_time(*this, t);
  switch (kind) {
    case BaselineKind::Weibull: {
      const double z1 = transform(raw[0]), z2 = transform(raw[1]);
      if (logscale) return z1 * std::pow(t, z2);
      return std::pow(z1 * t, z2);
    }
    case BaselineKind::Piecewise: {
      t = std::clamp(t, lo(), hi());
      const auto& k = knots->knots;
      double s = 0.0;
      for (int l = 0; l + 1 < knots->size(); ++l) {
        if (t <= k[l]) break;
        s += transform(raw[l]) * (std::min(t, k[l + 1]) - k[l]);
      }
      return s;
    }
    case BaselineKind::Msplines: {
      const auto iv = basis->ispline(t, true);
      double s = 0.0;
      for (std::size_t l = 0; l < iv.size(); ++l) s += transform(raw[l]) * iv[l];
      return s;
    }
  }
  return 0.0;
}

Baseline make_baseline(const HazardDescriptor& d, bool logscale, std::span<const double> times,
                       double entry_min, std::span<const double> interior) {
  Baseline b;
  b.kind = d.kind;
  b.logscale = logscale;
  if (d.kind == BaselineKind::Weibull) return b;
  if (times.empty()) throw Error("hazard knots need observed times");
  const double hi = *std::max_element(times.begin(), times.end());
  auto kv = place_knots(times, d.nodes, d.placement, interior, std::make_pair(entry_min, hi));
  if (d.kind == BaselineKind::Msplines) b.basis = hazard_spline_basis(kv);
  b.knots = std::move(kv);
  return b;
}

}  // namespace latmix
