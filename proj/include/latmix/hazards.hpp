#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latmix/basis.hpp"

namespace latmix {

enum class BaselineKind { Weibull, Piecewise, Msplines };
enum class HazardType { Specific, PH, Common };

std::string to_string(HazardType h);
HazardType parse_hazard_type(const std::string& s);

struct HazardDescriptor {
  BaselineKind kind = BaselineKind::Weibull;
  int nodes = 5;
  KnotPlacement placement = KnotPlacement::Equi;
};
/// "Weibull", "piecewise", "splines", "N-type-piecewise", "N-type-splines".
HazardDescriptor parse_hazard_descriptor(const std::string& s);

/**
 * Baseline hazard of one cause. Raw parameters are unconstrained and mapped
 * to positive values by squares (logscale=false) or exponentials (true).
 */
struct Baseline {
  BaselineKind kind = BaselineKind::Weibull;
  bool logscale = false;
  std::optional<KnotVector> knots;
  std::optional<SplineBasis> basis;

  int n_params() const;
  std::vector<std::string> param_names() const;
  double lo() const;  // support start (0 for Weibull)
  double hi() const;  // support end (infinity for Weibull)

  double transform(double raw) const { return logscale ? std::exp(raw) : raw * raw; }
  double hazard(double t, std::span<const double> raw) const;
  double cumulative(double t, std::span<const double> raw) const;
};

/// Baseline from descriptor; knots span [entry_min, max T], quantiles from `times`.
Baseline make_baseline(const HazardDescriptor& d, bool logscale, std::span<const double> times,
                       double entry_min, std::span<const double> interior = {});

}  // namespace latmix
