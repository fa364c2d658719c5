#include "latmix/summary.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "latmix/error.hpp"

namespace latmix {

namespace {

std::string fmt(const char* f, double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

std::string section_of(Block b) {
  switch (b) {
    case Block::Classmb: return "Class-membership model";
    case Block::Zeta:
    case Block::PhOffset: return "Baseline risk";
    case Block::SurvCommon:
    case Block::SurvMixture: return "Survival covariate effects";
    case Block::Fixed:
    case Block::Mixture: return "Fixed effects in the longitudinal model";
    case Block::Cholesky:
    case Block::Omega:
    case Block::Cor:
    case Block::RandomY: return "Variance components";
    case Block::Contrast: return "Marker-specific contrasts";
    case Block::Link: return "Link function parameters";
    case Block::Sigma: return "Residual standard errors";
  }
  return "";
}

}  // namespace

std::string summary_text(const FittedModel& fm, const ConvergenceSettings& conv) {
  const ValidatedModel& m = *fm.model;
  const ModelStructure& st = m.st;
  std::ostringstream o;
  o << to_string(st.family) << " fit with " << st.G << (st.G == 1 ? " latent class" : " latent classes") << "\n\n";

  o << "Dataset\n";
  o << "  subjects: " << m.counts.subjects << "\n";
  o << "  observations: " << m.counts.observations << "\n";
  o << "  deleted observations: " << m.counts.deleted_observations << "\n";
  if (m.counts.dropped_subjects > 0) o << "  dropped subjects: " << m.counts.dropped_subjects << "\n";
  o << "  markers:";
  for (const auto& k : st.markers) o << " " << k;
  o << "\n";
  if (st.joint())
    for (int p = 0; p < st.P; ++p) o << "  events of cause " << p + 1 << ": " << m.counts.events[p] << "\n";

  o << "\nConvergence\n";
  o << "  status: " << to_string(fm.opt.status) << "\n";
  o << "  iterations: " << fm.opt.iterations << " (max " << conv.maxiter << ")\n";
  o << "  parameter stability: " << fmt("%.5g", fm.opt.crit_params) << " (threshold " << fmt("%g", conv.eps_a) << ")\n";
  o << "  likelihood stability: " << fmt("%.5g", fm.opt.crit_loglik) << " (threshold " << fmt("%g", conv.eps_b) << ")\n";
  o << "  relative distance to the maximum: " << fmt("%.5g", fm.opt.crit_deriv) << " (threshold "
    << fmt("%g", conv.eps_d) << ")" << (fm.opt.deriv_inflated ? " [inflated Hessian]" : "") << "\n";
  if (!fm.opt.message.empty()) o << "  " << fm.opt.message << "\n";

  o << "\nGoodness of fit\n";
  o << "  log-likelihood: " << fmt("%.2f", fm.loglik()) << "\n";
  o << "  number of parameters: " << fm.n_free() << "\n";
  o << "  AIC: " << fmt("%.2f", fm.aic()) << "\n";
  o << "  BIC: " << fmt("%.2f", fm.bic()) << "\n";

  if (st.G > 1) {
    try {
      const auto post = posterior_probs(fm);
      const auto s = postprob_summary(post.prob, post.cls);
      o << "\nPosterior classification\n";
      o << pad("class", 8) << pad("N", 8) << pad("%", 9);
      for (int g = 0; g < st.G; ++g) o << pad("prob" + std::to_string(g + 1), 9);
      o << pad(">0.7", 9) << pad(">0.8", 9) << pad(">0.9", 9) << "\n";
      for (int g = 0; g < st.G; ++g) {
        o << pad(std::to_string(g + 1), 8) << pad(std::to_string(s.counts[g]), 8) << pad(fmt("%.2f", s.proportions[g]), 9);
        for (int l = 0; l < st.G; ++l) o << pad(fmt("%.4f", s.table(g, l)), 9);
        for (int k = 0; k < 3; ++k) o << pad(fmt("%.2f", s.above(g, k)), 9);
        o << "\n";
      }
    } catch (const Error& e) {
      o << "\nPosterior classification unavailable: " << e.what() << "\n";
    }
  }

  const auto rows = coefficient_table(fm);
  std::size_t w = 10;
  for (const auto& r : rows) w = std::max(w, r.name.size() + 2);
  std::string current;
  for (int v = 0; v < static_cast<int>(rows.size()); ++v) {
    const std::string sec = section_of(m.layout.slots[v].block);
    if (sec != current) {
      current = sec;
      o << "\n" << sec << "\n";
      o << pad("", w, true) << pad("coef", 12) << pad("Se", 12) << pad("Wald", 10) << pad("p-value", 10) << "\n";
    }
    const auto& r = rows[v];
    o << pad(r.name, w, true) << pad(fmt("%.5f", r.value), 12);
    if (!r.free) o << pad("fixed", 12) << "\n";
    else o << pad(fmt("%.5f", r.se), 12) << pad(fmt("%.3f", r.z), 10) << pad(fmt("%.5f", r.p), 10) << "\n";
  }

  if (st.q() > 0) {
    o << "\nRandom-effect covariance\n";
    const auto entries = varcov_re(m, fm.theta, fm.opt.covariance);
    for (const auto& e : entries) {
      o << pad(st.random_labels[e.i] + (e.i == e.j ? "" : " x " + st.random_labels[e.j]), w, true)
        << pad(fmt("%.5f", e.value), 12) << pad(fmt("%.5f", e.se), 12) << pad(fmt("%.3f", e.z), 10) << "\n";
    }
  }
  if (!fm.notes.empty()) {
    o << "\nNotes\n";
    for (const auto& n : fm.notes) o << "  " << n << "\n";
  }
  return o.str();
}

std::string summarytable_text(const std::vector<json>& archives, const std::vector<std::string>& labels,
                              std::vector<std::string>* warnings) {
  if (archives.empty()) throw Error("summarytable needs at least one archive");
  int gmax = 1;
  for (const auto& a : archives) gmax = std::max(gmax, a.at("spec").value("ng", 1));
  std::ostringstream o;
  std::size_t w = 8;
  for (const auto& l : labels) w = std::max(w, l.size() + 2);
  o << pad("model", w, true) << pad("G", 4) << pad("loglik", 14) << pad("npm", 6) << pad("BIC", 14);
  for (int g = 0; g < gmax; ++g) o << pad("%class" + std::to_string(g + 1), 10);
  o << "\n";
  const json& ref = archives[0].at("fingerprint");
  for (std::size_t i = 0; i < archives.size(); ++i) {
    const json& a = archives[i];
    const json& fp = a.at("fingerprint");
    if (warnings && (fp.value("hash", std::string()) != ref.value("hash", std::string()) ||
                     fp.value("subjects", -1) != ref.value("subjects", -1)))
      warnings->push_back(labels[i] + " was fitted on a different dataset than " + labels[0]);
    const int G = a.at("spec").value("ng", 1);
    const double ll = a.at("loglik").get<double>();
    const int npm = a.at("n_free").get<int>();
    const int n = fp.at("subjects").get<int>();
    const double bic = -2.0 * ll + npm * std::log(static_cast<double>(n));
    o << pad(labels[i], w, true) << pad(std::to_string(G), 4) << pad(fmt("%.2f", ll), 14) << pad(std::to_string(npm), 6)
      << pad(fmt("%.2f", bic), 14);
    const auto props = a.at("class_proportions").get<std::vector<double>>();
    for (int g = 0; g < gmax; ++g) o << pad(g < static_cast<int>(props.size()) ? fmt("%.1f", props[g]) : "", 10);
    o << "\n";
  }
  return o.str();
}

}  // namespace latmix
