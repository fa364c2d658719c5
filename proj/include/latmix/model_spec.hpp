#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latmix/hazards.hpp"
#include "latmix/links.hpp"

namespace latmix {

enum class Family { Hlme, Lcmm, Multlcmm, Jointlcmm };
enum class CorKind { None, BM, AR };

std::string to_string(Family f);
Family parse_family(const std::string& s);

/// Product of dataset columns; no factors means the intercept.
struct Term {
  std::vector<std::string> factors;

  bool is_intercept() const { return factors.empty(); }
  std::string label() const;
  bool operator==(const Term&) const = default;
};
/// "1" or "intercept" -> intercept; "a:b" -> product of columns a and b.
Term parse_term(const std::string& s);

struct LinkSpec {
  std::string descriptor = "linear";
  std::vector<double> intnodes;
  std::optional<std::pair<double, double>> range;
};

enum class CauseScope { All, Each, Single };

struct SurvTermSpec {
  Term term;
  bool mixture = false;
  CauseScope scope = CauseScope::All;
  int cause = 0;  // 1-based, Single scope only
};

struct SurvivalSpec {
  std::string entry;  // optional column
  std::string time;
  std::string event;
  std::vector<SurvTermSpec> terms;
  int causes = 1;
  std::vector<std::string> hazard{"Weibull"};  // one entry, or one per cause
  std::vector<std::vector<double>> hazardnodes;  // interior knots, per cause
  HazardType hazardtype = HazardType::Specific;
  bool logscale = false;
};

struct ModelSpec {
  Family family = Family::Hlme;
  std::string subject;
  std::string time;
  std::vector<std::string> outcomes;
  std::vector<Term> fixed, mixture, random, classmb, contrasts;
  int ng = 1;
  bool idiag = false;
  bool nwg = false;
  bool random_y = false;
  CorKind cor = CorKind::None;
  std::string cor_time;
  std::vector<LinkSpec> links;  // one per outcome; empty for Gaussian models
  double eps_y = 0.5;
  std::optional<SurvivalSpec> survival;
  int gh_points = 30;
  int max_gh_dim = 3;
};

/// Default iteration cap: 500 for hlme, 100 otherwise.
int default_maxiter(Family f);

}  // namespace latmix
