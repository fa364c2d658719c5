#pragma once

#include <string>
#include <vector>

#include "latmix/model_spec.hpp"
#include "latmix/numerics.hpp"

namespace latmix {

struct SurvEffect {
  std::string label;
  CauseScope scope = CauseScope::All;
  int cause = 0;  // 0-based for Single
  bool mixture = false;
};

/// Model dimensions resolved against the data.
struct ModelStructure {
  Family family = Family::Hlme;
  int G = 1;
  int K = 1;
  std::vector<std::string> markers;
  std::vector<std::string> fixed_labels;
  std::vector<bool> fixed_mixture;
  int intercept = -1;              // index of the intercept among fixed terms
  bool intercept_constrained = false;
  std::vector<std::string> random_labels;
  bool idiag = false;
  bool nwg = false;
  bool chol_first_fixed = false;
  CorKind cor = CorKind::None;
  bool random_y = false;
  std::vector<std::string> contrast_labels;
  bool sigma_free = true;
  std::vector<LinkFamily> links;   // per marker
  std::vector<std::string> classmb_labels;  // covariates, intercept implied
  int gh_points = 30;
  int max_gh_dim = 3;
  // survival
  int P = 0;
  std::vector<Baseline> baselines;  // per cause
  HazardType hazardtype = HazardType::Specific;
  std::vector<SurvEffect> surv_effects;

  int p() const { return static_cast<int>(fixed_labels.size()); }
  int q() const { return static_cast<int>(random_labels.size()); }
  int n_chol() const { return idiag ? q() : q() * (q() + 1) / 2; }
  int n_classmb() const { return 1 + static_cast<int>(classmb_labels.size()); }
  bool ordinal() const { return links.size() == 1 && links[0].kind == LinkKind::Thresholds; }
  bool joint() const { return P > 0; }
};

enum class Block {
  Classmb, Zeta, PhOffset, SurvCommon, SurvMixture, Fixed, Mixture,
  Cholesky, Omega, Cor, Contrast, RandomY, Link, Sigma
};

std::string to_string(Block b);

/// One free coordinate of theta and where it lands in ModelParams.
struct Slot {
  Block block;
  std::string name;
  int index = 0;    // term, parameter or element index within the block
  int cls = -1;     // -1: shared by all classes
  int cause = -1;   // -1: shared by all causes
  int marker = -1;
  bool class_specific() const { return cls >= 0; }
};

struct ParameterLayout {
  std::vector<Slot> slots;

  int size() const { return static_cast<int>(slots.size()); }
  std::vector<std::string> names() const;
  /// Index of the named slot, or -1.
  int find(const std::string& name) const;
  /// (first index, count) of a block.
  std::pair<int, int> block_range(Block b) const;
};

ParameterLayout build_layout(const ModelStructure& st);

/// Class-independent identity of a slot, used to map a one-class fit onto a
/// multi-class layout.
std::string slot_key(const ModelStructure& st, const Slot& s);

/// Structured parameter values with constraints applied.
struct ModelParams {
  Mat xi;                     // n_classmb x G, last column 0
  std::vector<Mat> zeta;      // per cause: n_zeta x G raw baseline parameters
  Mat ph;                     // P x G log proportional offsets, last column 0
  std::vector<Mat> surv;      // per cause: n_effects x G
  Mat beta;                   // p x G
  Vec chol;                   // raw Cholesky entries
  Mat B;                      // random-effect covariance
  Vec omega;                  // G, last 1
  double sigma_w = 0.0;
  double rho = 0.0;           // raw; the AR rate is rho^2
  Mat contrast;               // n_contrast x K, rows sum to 0
  Vec sigma_alpha;            // K
  std::vector<Vec> link;      // per marker
  Vec sigma_eps;              // K
};

ModelParams unpack(const ModelStructure& st, const ParameterLayout& layout, const Vec& theta);
Vec pack(const ModelStructure& st, const ParameterLayout& layout, const ModelParams& par);

/// B from raw Cholesky entries: U upper triangular stored column-major, B = U'U;
/// with idiag the entries are standard deviations.
Mat chol_to_cov(const Vec& chol, int q, bool idiag);

/// Multinomial logistic class probabilities, last class as reference.
Vec class_membership_probs(const Vec& x_class, const Mat& xi);

}  // namespace latmix
