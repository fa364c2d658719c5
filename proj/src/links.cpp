#include "latmix/links.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include <boost/math/special_functions/beta.hpp>

#include "latmix/error.hpp"

namespace latmix {

int LinkFamily::n_params() const {
  switch (kind) {
    case LinkKind::Identity: return 0;
    case LinkKind::Linear: return 2;
    case LinkKind::Beta: return 4;
    case LinkKind::Splines: return basis->size() + 1;
    case LinkKind::Thresholds: return levels - 1;
  }
  return 0;
}

std::vector<std::string> LinkFamily::param_names() const {
  std::vector<std::string> out;
  const int n = n_params();
  for (int l = 0; l < n; ++l) {
    switch (kind) {
      case LinkKind::Linear: out.push_back(l == 0 ? "Linear 1 (intercept)" : "Linear 2 (std err)"); break;
      case LinkKind::Beta: out.push_back("Beta" + std::to_string(l + 1)); break;
      case LinkKind::Splines: out.push_back("I-splines" + std::to_string(l + 1)); break;
      case LinkKind::Thresholds: out.push_back("thresh. parm" + std::to_string(l + 1)); break;
      case LinkKind::Identity: break;
    }
  }
  return out;
}

LinkDescriptor parse_link_descriptor(const std::string& s) {
  LinkDescriptor d;
  if (s == "linear") return d;
  if (s == "beta" || s == "Beta") {
    d.kind = LinkKind::Beta;
    return d;
  }
  if (s == "thresholds") {
    d.kind = LinkKind::Thresholds;
    return d;
  }
  if (s == "splines") {
    d.kind = LinkKind::Splines;
    return d;
  }
  static const std::regex re(R"((\d+)-(equi|quant|manual)-splines)");
  std::smatch m;
  if (std::regex_match(s, m, re)) {
    d.kind = LinkKind::Splines;
    d.nodes = std::stoi(m[1]);
    d.placement = parse_knot_placement(m[2]);
    if (d.nodes < 3) throw Error("spline links need at least 3 knots");
    return d;
  }
  throw Error("unknown link descriptor '" + s + "'");
}

LinkFamily make_link(const LinkDescriptor& d, std::span<const double> observed, double eps_y,
                     std::span<const double> intnodes,
                     std::optional<std::pair<double, double>> range) {
  if (observed.empty()) throw Error("link construction needs observed values");
  const auto [mn, mx] = std::minmax_element(observed.begin(), observed.end());
  LinkFamily f;
  f.kind = d.kind;
  f.eps_y = eps_y;
  f.lo = *mn;
  f.hi = *mx;
  if (range) {
    if (range->first > f.lo || range->second < f.hi)
      throw Error("declared link range does not cover the observed outcome values");
    f.lo = range->first;
    f.hi = range->second;
  }
  if (!(eps_y > 0.0)) throw Error("epsY must be positive");
  switch (d.kind) {
    case LinkKind::Linear:
    case LinkKind::Identity:
      break;
    case LinkKind::Beta:
      if (!(f.lo < f.hi)) throw Error("beta link needs a nondegenerate outcome range");
      break;
    case LinkKind::Splines: {
      if (!(f.lo < f.hi)) throw Error("spline link needs a nondegenerate outcome range");
      auto kv = place_knots(observed, d.nodes, d.placement, intnodes,
                            std::make_pair(f.lo, f.hi));
      f.basis = link_spline_basis(std::move(kv));
      break;
    }
    case LinkKind::Thresholds: {
      std::vector<int> levels;
      for (double v : observed) {
        if (v != std::round(v)) throw Error("thresholds link needs integer outcome values");
        levels.push_back(static_cast<int>(std::lround(v)));
      }
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      f.min_level = levels.front();
      f.levels = levels.back() - levels.front() + 1;
      if (static_cast<int>(levels.size()) != f.levels)
        throw Error("thresholds link needs every level between min and max to be observed");
      if (f.levels < 2) throw Error("thresholds link needs at least 2 levels");
      f.lo = levels.front();
      f.hi = levels.back();
      break;
    }
  }
  return f;
}

std::pair<double, double> beta_canonical(double eta1, double eta2) {
  const double e1 = std::exp(eta1), e2 = std::exp(eta2);
  return {e1 / (e2 * (1.0 + e1)), 1.0 / (e1 * (1.0 + e2))};
}

namespace {

double clamp_or_throw(const LinkFamily& f, double y, bool clamp) {
  if (y >= f.lo && y <= f.hi) return y;
  const double tol = 1e-10 * std::max(1.0, f.hi - f.lo);
  if (!clamp && (y < f.lo - tol || y > f.hi + tol || !std::isfinite(y)))
    throw Error("outcome value " + std::to_string(y) + " outside the link range");
  return std::clamp(y, f.lo, f.hi);
}

}  // namespace

LinkValue inverse_transform(const LinkFamily& f, std::span<const double> eta, double y,
                            bool clamp) {
  switch (f.kind) {
    case LinkKind::Identity:
      return {y, 0.0};
    case LinkKind::Linear:
      if (!(eta[1] > 0.0)) throw Error("linear link needs a positive scale parameter");
      return {(y - eta[0]) / eta[1], -std::log(eta[1])};
    case LinkKind::Beta: {
      y = clamp_or_throw(f, y, clamp);
      if (eta[3] == 0.0) throw Error("beta link needs a nonzero scale parameter");
      const auto [a, b] = beta_canonical(eta[0], eta[1]);
      const double width = f.hi - f.lo + 2.0 * f.eps_y;
      const double ys = (y - f.lo + f.eps_y) / width;
      const double cdf = boost::math::ibeta(a, b, ys);
      const double dens = boost::math::ibeta_derivative(a, b, ys);
      return {(cdf - eta[2]) / eta[3], std::log(dens) - std::log(std::abs(eta[3])) - std::log(width)};
    }
    case LinkKind::Splines: {
      y = clamp_or_throw(f, y, clamp);
      const auto iv = f.basis->ispline(y);
      const auto mv = f.basis->mspline(y);
      double v = eta[0], d = 0.0;
      for (std::size_t l = 0; l < iv.size(); ++l) {
        const double w = eta[l + 1] * eta[l + 1];
        v += w * iv[l];
        d += w * mv[l];
      }
      return {v, std::log(d)};
    }
    case LinkKind::Thresholds:
      break;
  }
  throw Error("inverse transform requested for a thresholds link");
}

double forward_transform(const LinkFamily& f, std::span<const double> eta, double lambda) {
  switch (f.kind) {
    case LinkKind::Identity: return lambda;
    case LinkKind::Linear: return eta[0] + eta[1] * lambda;
    case LinkKind::Thresholds: throw Error("forward transform requested for a thresholds link");
    default: break;
  }
  auto g = [&](double y) { return inverse_transform(f, eta, y).value; };
  double a = f.lo, b = f.hi;
  double ga = g(a), gb = g(b);
  const bool increasing = gb >= ga;
  if (!increasing) std::swap(ga, gb);
  if (lambda <= ga) return increasing ? f.lo : f.hi;
  if (lambda >= gb) return increasing ? f.hi : f.lo;
  // safeguarded Newton on h(y) = g(y) - lambda
  double y = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const auto lv = inverse_transform(f, eta, y);
    const double h = lv.value - lambda;
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(lambda))) return y;
    if ((h < 0.0) == increasing) a = y; else b = y;
    const double slope = (increasing ? 1.0 : -1.0) * std::exp(lv.log_jac);
    double next = y - h / slope;
    if (!(next > a && next < b) || !std::isfinite(next)) next = 0.5 * (a + b);
    if (std::abs(next - y) < 1e-15 * std::max(1.0, std::abs(y)) || b - a < 1e-15 * std::max(1.0, std::abs(y)))
      return next;
    y = next;
  }
  return y;
}

std::vector<double> thresholds_expand(std::span<const double> eta) {
  std::vector<double> out(eta.size());
  double acc = 0.0;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    acc = l == 0 ? eta[0] : acc + eta[l] * eta[l];
    out[l] = acc;
  }
  return out;
}

}  // namespace latmix
