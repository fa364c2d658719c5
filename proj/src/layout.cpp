#include "latmix/layout.hpp"

#include <algorithm>
#include <cmath>

#include "latmix/error.hpp"

namespace latmix {

std::string to_string(Block b) {
  switch (b) {
    case Block::Classmb: return "classmb";
    case Block::Zeta: return "zeta";
    case Block::PhOffset: return "ph";
    case Block::SurvCommon: return "surv";
    case Block::SurvMixture: return "surv_mixture";
    case Block::Fixed: return "fixed";
    case Block::Mixture: return "mixture";
    case Block::Cholesky: return "cholesky";
    case Block::Omega: return "omega";
    case Block::Cor: return "cor";
    case Block::Contrast: return "contrast";
    case Block::RandomY: return "randomY";
    case Block::Link: return "link";
    case Block::Sigma: return "sigma";
  }
  return "?";
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back(s.name);
  return out;
}

int ParameterLayout::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (slots[i].name == name) return i;
  return -1;
}

std::pair<int, int> ParameterLayout::block_range(Block b) const {
  int first = -1, count = 0;
  for (int i = 0; i < size(); ++i) {
    if (slots[i].block == b) {
      if (first < 0) first = i;
      ++count;
    }
  }
  return {first, count};
}

namespace {

std::string cls_suffix(int g) { return " class" + std::to_string(g + 1); }

}  // namespace

ParameterLayout build_layout(const ModelStructure& st) {
  ParameterLayout lay;
  auto add = [&](Block b, std::string name, int index, int cls = -1, int cause = -1,
                 int marker = -1) {
    lay.slots.push_back(Slot{b, std::move(name), index, cls, cause, marker});
  };
  const int G = st.G;

  if (G > 1) {
    for (int t = 0; t < st.n_classmb(); ++t) {
      const std::string lab = t == 0 ? "intercept" : st.classmb_labels[t - 1];
      for (int g = 0; g + 1 < G; ++g) add(Block::Classmb, lab + cls_suffix(g), t, g);
    }
  }

  for (int p = 0; p < st.P; ++p) {
    const auto& base = st.baselines[p];
    const auto pn = base.param_names();
    const std::string ev = "event" + std::to_string(p + 1) + " ";
    if (st.hazardtype == HazardType::Specific && G > 1) {
      for (int g = 0; g < G; ++g)
        for (int l = 0; l < base.n_params(); ++l) add(Block::Zeta, ev + pn[l] + cls_suffix(g), l, g, p);
    } else {
      for (int l = 0; l < base.n_params(); ++l) add(Block::Zeta, ev + pn[l], l, -1, p);
      if (st.hazardtype == HazardType::PH)
        for (int g = 0; g + 1 < G; ++g) add(Block::PhOffset, ev + "SurvPH" + cls_suffix(g), 0, g, p);
    }
  }
  auto surv_slots = [&](bool mixture) {
    for (int s = 0; s < static_cast<int>(st.surv_effects.size()); ++s) {
      const auto& e = st.surv_effects[s];
      if (e.mixture != mixture) continue;
      std::vector<int> causes;
      if (e.scope == CauseScope::All) causes = {-1};
      else if (e.scope == CauseScope::Single) causes = {e.cause};
      else
        for (int p = 0; p < st.P; ++p) causes.push_back(p);
      for (int c : causes) {
        const std::string ev = (c >= 0 && st.P > 1) ? " event" + std::to_string(c + 1) : "";
        if (mixture) {
          for (int g = 0; g < G; ++g) add(Block::SurvMixture, e.label + ev + cls_suffix(g), s, g, c);
        } else {
          add(Block::SurvCommon, e.label + ev, s, -1, c);
        }
      }
    }
  };
  surv_slots(false);
  surv_slots(true);

  for (int j = 0; j < st.p(); ++j) {
    if (st.fixed_mixture[j]) continue;
    if (j == st.intercept && st.intercept_constrained) continue;
    add(Block::Fixed, st.fixed_labels[j], j);
  }
  for (int j = 0; j < st.p(); ++j) {
    if (!st.fixed_mixture[j]) continue;
    for (int g = 0; g < G; ++g) {
      if (j == st.intercept && st.intercept_constrained && g == 0) continue;
      add(Block::Mixture, st.fixed_labels[j] + cls_suffix(g), j, g);
    }
  }

  for (int e = 0; e < st.n_chol(); ++e) {
    if (e == 0 && st.chol_first_fixed) continue;
    add(Block::Cholesky, "varcov " + std::to_string(e + 1), e);
  }
  if (st.nwg && G > 1)
    for (int g = 0; g + 1 < G; ++g) add(Block::Omega, "varprop" + cls_suffix(g), 0, g);
  if (st.cor == CorKind::BM) add(Block::Cor, "stdBM", 0);
  if (st.cor == CorKind::AR) {
    add(Block::Cor, "stdAR", 0);
    add(Block::Cor, "AR rate (sqrt)", 1);
  }
  for (int c = 0; c < static_cast<int>(st.contrast_labels.size()); ++c)
    for (int k = 0; k + 1 < st.K; ++k)
      add(Block::Contrast, "contrast" + std::to_string(k + 1) + "(" + st.contrast_labels[c] + ")", c, -1, -1, k);
  if (st.random_y)
    for (int k = 0; k < st.K; ++k) add(Block::RandomY, "std.randomY " + st.markers[k], 0, -1, -1, k);
  for (int k = 0; k < st.K; ++k) {
    const auto pn = st.links[k].param_names();
    for (int l = 0; l < static_cast<int>(pn.size()); ++l)
      add(Block::Link, st.K > 1 ? st.markers[k] + "-" + pn[l] : pn[l], l, -1, -1, k);
  }
  if (st.sigma_free)
    for (int k = 0; k < st.K; ++k)
      add(Block::Sigma, st.K > 1 ? "std.err " + st.markers[k] : "stderr", 0, -1, -1, k);
  return lay;
}

std::string slot_key(const ModelStructure& st, const Slot& s) {
  const std::string c = "|" + std::to_string(s.cause) + "|" + std::to_string(s.marker);
  switch (s.block) {
    case Block::Fixed:
    case Block::Mixture:
      return "beta|" + st.fixed_labels[s.index];
    case Block::SurvCommon:
    case Block::SurvMixture:
      return "surv|" + st.surv_effects[s.index].label + c;
    default:
      return to_string(s.block) + "|" + std::to_string(s.index) + c;
  }
}

Mat chol_to_cov(const Vec& chol, int q, bool idiag) {
  Mat b = Mat::Zero(q, q);
  if (idiag) {
    for (int i = 0; i < q; ++i) b(i, i) = chol[i] * chol[i];
    return b;
  }
  Mat u = Mat::Zero(q, q);
  int e = 0;
  for (int j = 0; j < q; ++j)
    for (int i = 0; i <= j; ++i) u(i, j) = chol[e++];
  return u.transpose() * u;
}

ModelParams unpack(const ModelStructure& st, const ParameterLayout& layout, const Vec& theta) {
  if (theta.size() != layout.size())
    throw Error("parameter vector has length " + std::to_string(theta.size()) + ", layout expects " +
                std::to_string(layout.size()));
  const int G = st.G, K = st.K;
  ModelParams par;
  par.xi = Mat::Zero(st.n_classmb(), G);
  par.ph = Mat::Zero(st.P, G);
  for (int p = 0; p < st.P; ++p) {
    par.zeta.push_back(Mat::Zero(st.baselines[p].n_params(), G));
    par.surv.push_back(Mat::Zero(static_cast<int>(st.surv_effects.size()), G));
  }
  par.beta = Mat::Zero(st.p(), G);
  par.chol = Vec::Zero(st.n_chol());
  if (st.chol_first_fixed && st.n_chol() > 0) par.chol[0] = 1.0;
  par.omega = Vec::Ones(G);
  par.contrast = Mat::Zero(static_cast<int>(st.contrast_labels.size()), K);
  par.sigma_alpha = Vec::Zero(K);
  for (int k = 0; k < K; ++k) par.link.push_back(Vec::Zero(st.links[k].n_params()));
  par.sigma_eps = Vec::Ones(K);

  auto for_classes = [&](int cls, auto&& fn) {
    if (cls >= 0) fn(cls);
    else
      for (int g = 0; g < G; ++g) fn(g);
  };
  auto for_causes = [&](int cause, auto&& fn) {
    if (cause >= 0) fn(cause);
    else
      for (int p = 0; p < st.P; ++p) fn(p);
  };

  for (int v = 0; v < layout.size(); ++v) {
    const Slot& s = layout.slots[v];
    const double x = theta[v];
    switch (s.block) {
      case Block::Classmb: par.xi(s.index, s.cls) = x; break;
      case Block::Zeta:
        for_classes(s.cls, [&](int g) { par.zeta[s.cause](s.index, g) = x; });
        break;
      case Block::PhOffset: par.ph(s.cause, s.cls) = x; break;
      case Block::SurvCommon:
      case Block::SurvMixture:
        for_causes(s.cause, [&](int p) {
          for_classes(s.cls, [&](int g) { par.surv[p](s.index, g) = x; });
        });
        break;
      case Block::Fixed:
        for_classes(-1, [&](int g) { par.beta(s.index, g) = x; });
        break;
      case Block::Mixture: par.beta(s.index, s.cls) = x; break;
      case Block::Cholesky: par.chol[s.index] = x; break;
      case Block::Omega: par.omega[s.cls] = x; break;
      case Block::Cor: (s.index == 0 ? par.sigma_w : par.rho) = x; break;
      case Block::Contrast: par.contrast(s.index, s.marker) = x; break;
      case Block::RandomY: par.sigma_alpha[s.marker] = x; break;
      case Block::Link: par.link[s.marker][s.index] = x; break;
      case Block::Sigma: par.sigma_eps[s.marker] = x; break;
    }
  }
  for (int c = 0; c < par.contrast.rows(); ++c)
    par.contrast(c, K - 1) = -par.contrast.row(c).head(K - 1).sum();
  par.B = chol_to_cov(par.chol, st.q(), st.idiag);
  return par;
}

Vec pack(const ModelStructure& st, const ParameterLayout& layout, const ModelParams& par) {
  (void)st;
  Vec theta(layout.size());
  for (int v = 0; v < layout.size(); ++v) {
    const Slot& s = layout.slots[v];
    const int g = std::max(s.cls, 0);
    const int p = std::max(s.cause, 0);
    double x = 0.0;
    switch (s.block) {
      case Block::Classmb: x = par.xi(s.index, g); break;
      case Block::Zeta: x = par.zeta[s.cause](s.index, g); break;
      case Block::PhOffset: x = par.ph(s.cause, g); break;
      case Block::SurvCommon:
      case Block::SurvMixture: x = par.surv[p](s.index, g); break;
      case Block::Fixed:
      case Block::Mixture: x = par.beta(s.index, g); break;
      case Block::Cholesky: x = par.chol[s.index]; break;
      case Block::Omega: x = par.omega[g]; break;
      case Block::Cor: x = s.index == 0 ? par.sigma_w : par.rho; break;
      case Block::Contrast: x = par.contrast(s.index, s.marker); break;
      case Block::RandomY: x = par.sigma_alpha[s.marker]; break;
      case Block::Link: x = par.link[s.marker][s.index]; break;
      case Block::Sigma: x = par.sigma_eps[s.marker]; break;
    }
    theta[v] = x;
  }
  return theta;
}

Vec class_membership_probs(const Vec& x_class, const Mat& xi) {
  const int G = static_cast<int>(xi.cols());
  Vec lin(G);
  for (int g = 0; g < G; ++g) lin[g] = x_class.dot(xi.col(g));
  const double m = lin.maxCoeff();
  Vec p = (lin.array() - m).exp();
  return p / p.sum();
}

}  // namespace latmix
