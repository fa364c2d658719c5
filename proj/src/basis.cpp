#include "latmix/basis.hpp"

#include <algorithm>
#include <cmath>

#include "latmix/error.hpp"

namespace latmix {

std::string to_string(KnotPlacement p) {
  switch (p) {
    case KnotPlacement::Equi: return "equi";
    case KnotPlacement::Quant: return "quant";
    case KnotPlacement::Manual: return "manual";
  }
  return "equi";
}

KnotPlacement parse_knot_placement(const std::string& s) {
  if (s == "equi") return KnotPlacement::Equi;
  if (s == "quant") return KnotPlacement::Quant;
  if (s == "manual") return KnotPlacement::Manual;
  throw Error("unknown knot placement '" + s + "'");
}

KnotVector place_knots(std::span<const double> sample, int n, KnotPlacement type,
                       std::span<const double> interior,
                       std::optional<std::pair<double, double>> bounds) {
  if (n < 2) throw Error("knot placement needs at least 2 knots");
  if (sample.empty() && !bounds) throw Error("knot placement needs a nonempty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  double lo = bounds ? bounds->first : sorted.front();
  double hi = bounds ? bounds->second : sorted.back();
  if (!(lo < hi)) throw Error("knot placement needs a range with min < max");

  KnotVector kv;
  kv.placement = type;
  kv.knots.push_back(lo);
  switch (type) {
    case KnotPlacement::Equi:
      for (int j = 1; j + 1 < n; ++j) kv.knots.push_back(lo + (hi - lo) * j / (n - 1));
      break;
    case KnotPlacement::Quant:
      if (sorted.empty()) throw Error("quantile knots need a nonempty sample");
      for (int j = 1; j + 1 < n; ++j)
        kv.knots.push_back(quantile_sorted(sorted, static_cast<double>(j) / (n - 1)));
      break;
    case KnotPlacement::Manual:
      if (static_cast<int>(interior.size()) != n - 2)
        throw Error("manual knots: expected " + std::to_string(n - 2) + " interior knots, got " +
                    std::to_string(interior.size()));
      for (double v : interior) kv.knots.push_back(v);
      break;
  }
  kv.knots.push_back(hi);
  for (int j = 1; j < kv.size(); ++j) {
    if (!(kv.knots[j] > kv.knots[j - 1])) {
      if (type == KnotPlacement::Manual && (kv.knots[j] <= lo || kv.knots[j - 1] >= hi))
        throw Error("manual knots must lie strictly inside the range");
      throw Error("knots are not strictly increasing (tied quantiles or invalid manual knots)");
    }
  }
  return kv;
}

std::vector<double> bspline_values(double x, std::span<const double> t, int k) {
  const int nt = static_cast<int>(t.size());
  const int n = nt - k;
  std::vector<double> b(nt - 1, 0.0);
  // locate interval [t_j, t_{j+1}) with the last nonempty one at the right end
  int j = -1;
  if (x >= t[nt - 1]) {
    for (int i = nt - 2; i >= 0; --i)
      if (t[i] < t[i + 1]) {
        j = i;
        break;
      }
  } else {
    for (int i = 0; i + 1 < nt; ++i)
      if (t[i] <= x && x < t[i + 1]) {
        j = i;
        break;
      }
  }
  if (j < 0) return std::vector<double>(n, 0.0);
  b[j] = 1.0;
  for (int r = 2; r <= k; ++r) {
    for (int i = 0; i + r < nt; ++i) {
      double v = 0.0;
      const double d1 = t[i + r - 1] - t[i];
      const double d2 = t[i + r] - t[i + 1];
      if (d1 > 0.0) v += (x - t[i]) / d1 * b[i];
      if (d2 > 0.0) v += (t[i + r] - x) / d2 * b[i + 1];
      b[i] = v;
    }
  }
  b.resize(n);
  return b;
}

SplineBasis::SplineBasis(KnotVector knots, int order) : knots_(std::move(knots)), order_(order) {
  if (knots_.size() < 2) throw Error("spline basis needs at least 2 knots");
  const double lo = knots_.lo(), hi = knots_.hi();
  for (int i = 0; i < order_; ++i) t_.push_back(lo);
  for (int j = 1; j + 1 < knots_.size(); ++j) t_.push_back(knots_.knots[j]);
  for (int i = 0; i < order_; ++i) t_.push_back(hi);
  n_ = static_cast<int>(t_.size()) - order_;
  t_ext_.push_back(lo);
  t_ext_.insert(t_ext_.end(), t_.begin(), t_.end());
  t_ext_.push_back(hi);
}

double SplineBasis::check(double x, bool clamp) const {
  const double lo = knots_.lo(), hi = knots_.hi();
  const double tol = 1e-10 * std::max(1.0, hi - lo);
  if (x < lo || x > hi) {
    if (!clamp && (x < lo - tol || x > hi + tol || !std::isfinite(x)))
      throw Error("value " + std::to_string(x) + " outside spline range [" + std::to_string(lo) +
                  ", " + std::to_string(hi) + "]");
    return std::clamp(x, lo, hi);
  }
  return x;
}

std::vector<double> SplineBasis::mspline(double x, bool clamp) const {
  x = check(x, clamp);
  auto b = bspline_values(x, t_, order_);
  for (int i = 0; i < n_; ++i) {
    const double w = t_[i + order_] - t_[i];
    b[i] = w > 0.0 ? order_ * b[i] / w : 0.0;
  }
  return b;
}

std::vector<double> SplineBasis::ispline(double x, bool clamp) const {
  x = check(x, clamp);
  const auto b = bspline_values(x, t_ext_, order_ + 1);  // n_ + 1 values
  std::vector<double> out(n_, 0.0);
  double acc = 0.0;
  for (int i = n_ - 1; i >= 0; --i) {
    acc += b[i + 1];
    out[i] = std::min(acc, 1.0);
  }
  return out;
}

}  // namespace latmix
