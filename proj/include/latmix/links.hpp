#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latmix/basis.hpp"

namespace latmix {

enum class LinkKind { Identity, Linear, Beta, Splines, Thresholds };

/**
 * Measurement link of one marker. Identity is the Gaussian case without
 * link parameters. Thresholds hold M levels M0..M0+M-1.
 */
struct LinkFamily {
  LinkKind kind = LinkKind::Identity;
  double lo = 0.0, hi = 1.0;  // outcome range
  double eps_y = 0.5;
  std::optional<SplineBasis> basis;
  int levels = 0;
  int min_level = 0;

  int n_params() const;
  bool continuous() const { return kind != LinkKind::Thresholds; }
  /// Human-readable parameter names, e.g. "I-splines3".
  std::vector<std::string> param_names() const;
};

/// Parsed link descriptor: "linear", "beta", "thresholds", "splines",
/// "N-type-splines".
struct LinkDescriptor {
  LinkKind kind = LinkKind::Linear;
  int nodes = 5;
  KnotPlacement placement = KnotPlacement::Equi;
};
LinkDescriptor parse_link_descriptor(const std::string& s);

/// Builds a link from its descriptor and the observed marker values.
LinkFamily make_link(const LinkDescriptor& d, std::span<const double> observed, double eps_y,
                     std::span<const double> intnodes,
                     std::optional<std::pair<double, double>> range);

struct LinkValue {
  double value;    // H^{-1}(y)
  double log_jac;  // log dH^{-1}/dy
};

/// Positive canonical Beta shape parameters from the unconstrained (eta1, eta2).
std::pair<double, double> beta_canonical(double eta1, double eta2);

/// H^{-1}(y) and its log-Jacobian for continuous links. Out-of-range y
/// throws unless clamp is set.
LinkValue inverse_transform(const LinkFamily& f, std::span<const double> eta, double y,
                            bool clamp = false);

/// H(lambda); values outside the image map to the nearer range endpoint.
double forward_transform(const LinkFamily& f, std::span<const double> eta, double lambda);

/// Cut-points eta*_1 = eta_1, eta*_l = eta_1 + sum_{j=2}^{l} eta_j^2.
std::vector<double> thresholds_expand(std::span<const double> eta);

}  // namespace latmix
