#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latmix/numerics.hpp"

namespace latmix {

enum class KnotPlacement { Equi, Quant, Manual };

std::string to_string(KnotPlacement p);
KnotPlacement parse_knot_placement(const std::string& s);

/// Boundary and interior knots, strictly increasing.
struct KnotVector {
  std::vector<double> knots;
  KnotPlacement placement = KnotPlacement::Equi;

  double lo() const { return knots.front(); }
  double hi() const { return knots.back(); }
  int size() const { return static_cast<int>(knots.size()); }
};

/**
 * Places n knots. Boundaries are `bounds` when given, else the sample range.
 * Equi: evenly spaced. Quant: interior knots at the equiprobable type-7
 * quantiles of the sample. Manual: `interior` supplies the n-2 interior knots.
 */
KnotVector place_knots(std::span<const double> sample, int n, KnotPlacement type,
                       std::span<const double> interior = {},
                       std::optional<std::pair<double, double>> bounds = std::nullopt);

/// B-spline values of order k on a full (clamped) knot sequence. At the right
/// boundary the last nonempty interval is used.
std::vector<double> bspline_values(double x, std::span<const double> t, int k);

/**
 * M-splines of order k (degree k-1) normalized to unit integral, and their
 * integrals (I-splines), on boundary knots repeated k times. With m distinct
 * knots there are m + k - 2 basis functions.
 */
class SplineBasis {
 public:
  SplineBasis(KnotVector knots, int order);

  int size() const { return n_; }
  int order() const { return order_; }
  const KnotVector& knots() const { return knots_; }

  /// Throws when x is outside the knot range beyond a rounding tolerance;
  /// with clamp=true such x is moved to the nearest boundary instead.
  std::vector<double> mspline(double x, bool clamp = false) const;
  std::vector<double> ispline(double x, bool clamp = false) const;

 private:
  double check(double x, bool clamp) const;

  KnotVector knots_;
  int order_;
  int n_;
  std::vector<double> t_;       // order-k sequence
  std::vector<double> t_ext_;   // order-(k+1) sequence for integrals
};

/// Quadratic-piece link basis: m knots give m+1 I-splines.
inline SplineBasis link_spline_basis(KnotVector k) { return SplineBasis(std::move(k), 3); }
/// Cubic M-spline hazard basis: n_z knots give n_z+2 functions.
inline SplineBasis hazard_spline_basis(KnotVector k) { return SplineBasis(std::move(k), 4); }

}  // namespace latmix
