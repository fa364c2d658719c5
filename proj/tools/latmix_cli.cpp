#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "latmix/error.hpp"
#include "latmix/io.hpp"
#include "latmix/postfit.hpp"
#include "latmix/simulate.hpp"
#include "latmix/summary.hpp"

using namespace latmix;

namespace {

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double x : parse_doubles(s)) {
    if (x != std::round(x)) throw Error("not an integer: " + format_double(x));
    out.push_back(static_cast<int>(x));
  }
  return out;
}

// Output stream: a file, or stdout for "-" or empty.
struct Output {
  std::ofstream file;
  std::ostream* os = &std::cout;
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file.open(path);
      if (!file) throw Error("cannot write '" + path + "'");
      os = &file;
    }
  }
  std::ostream& operator*() { return *os; }
};

struct LoadedFit {
  json archive;
  DataTable data;
  std::shared_ptr<const ValidatedModel> model;
  FittedModel fm;
};

LoadedFit load_fit(const std::string& archive_path, const std::string& data_path) {
  LoadedFit l;
  l.archive = read_json(archive_path);
  l.data = read_csv(data_path);
  l.model = validate_and_build(spec_from_json(l.archive.at("spec")), l.data);
  if (!fingerprint_matches(l.archive, *l.model, l.data))
    throw Error("archive '" + archive_path + "' was fitted on a different dataset than '" + data_path + "'");
  l.fm = fitted_from_archive(l.archive, l.model);
  return l;
}

Vec class_proportions(const FittedModel& fm) {
  const int G = fm.model->st.G;
  Vec p = Vec::Constant(G, std::numeric_limits<double>::quiet_NaN());
  try {
    const auto post = posterior_probs(fm);
    p = postprob_summary(post.prob, post.cls).proportions;
  } catch (const Error&) {
  }
  return p;
}

int exit_code(const FittedModel& fm) {
  switch (fm.opt.status) {
    case OptStatus::Converged: return 0;
    case OptStatus::MaxIter: return 2;
    case OptStatus::Failed: return 1;
  }
  return 1;
}

struct FitArgs {
  std::string model, data, out = "fit.json", summary_out, init = "default", gridsearch, posfix;
  std::uint64_t seed = 1;
  int threads = 1;
  double conv_b = 1e-4, conv_l = 1e-4, conv_g = 1e-4;
  int maxiter = 0;
};

FittedModel lower_from_archive(const std::string& path, const DataTable& data) {
  const json a = read_json(path);
  auto lm = validate_and_build(spec_from_json(a.at("spec")), data);
  return fitted_from_archive(a, lm);
}

int run_fit(const FitArgs& args) {
  const ModelSpec spec = read_spec(args.model);
  const DataTable data = read_csv(args.data);
  const auto m = validate_and_build(spec, data);

  FitOptions opts;
  opts.conv = {args.conv_b, args.conv_l, args.conv_g, args.maxiter};
  opts.threads = args.threads;
  std::vector<std::string> notes;

  Vec theta0;
  std::optional<FittedModel> lower;
  if (args.init == "default") {
    theta0 = init_default(*m, &notes);
  } else if (args.init.rfind("from:", 0) == 0) {
    const std::string path = args.init.substr(5);
    const json a = read_json(path);
    if (a.at("spec").value("ng", 1) == m->st.G && static_cast<int>(a.at("parameters").size()) == m->layout.size()) {
      theta0 = Vec(m->layout.size());
      for (int v = 0; v < m->layout.size(); ++v) {
        const auto& p = a.at("parameters")[v];
        if (p.at("name").get<std::string>() != m->layout.slots[v].name)
          throw Error("initial archive parameter '" + p.at("name").get<std::string>() + "' does not match the model");
        theta0[v] = p.at("value").get<double>();
      }
    } else {
      lower = lower_from_archive(path, data);
      theta0 = init_from_lower(*m, *lower, &notes);
    }
  } else if (args.init.rfind("random:", 0) == 0) {
    lower = lower_from_archive(args.init.substr(7), data);
    theta0 = init_random(*m, *lower, args.seed, 0, &notes);
  } else {
    throw Error("--init must be default, from:<archive> or random:<archive>");
  }

  if (!args.posfix.empty()) {
    opts.mask.assign(m->layout.size(), true);
    for (int i : parse_ints(args.posfix)) {
      if (i < 1 || i > m->layout.size()) throw Error("--posfix index " + std::to_string(i) + " out of range");
      opts.mask[i - 1] = false;
    }
  }

  FittedModel fm;
  if (!args.gridsearch.empty()) {
    const auto rm = parse_ints(args.gridsearch);
    if (rm.size() != 2 || rm[0] < 1 || rm[1] < 1) throw Error("--gridsearch expects rep,maxiter");
    if (!lower) {
      auto lm = validate_and_build(one_class_spec(spec), data);
      FitOptions lo = opts;
      lo.mask.clear();
      lower = fit_model(lm, init_default(*lm, nullptr), lo);
      if (!lower->opt.converged()) notes.push_back("the one-class fit used by the grid search did not converge");
    }
    fm = gridsearch(m, *lower, rm[0], rm[1], args.seed, opts);
  } else {
    fm = fit_model(m, theta0, opts);
  }
  fm.notes.insert(fm.notes.begin(), notes.begin(), notes.end());

  write_json(args.out, archive_to_json(fm, data, class_proportions(fm)));
  const std::string text = summary_text(fm, fm.conv);
  if (!args.summary_out.empty()) {
    std::ofstream f(args.summary_out);
    f << text;
  }
  std::cout << text;
  return exit_code(fm);
}

struct PostArgs {
  std::string archive, data, out;
  std::uint64_t seed = 1;
  int threads = 1;
  int draws = 0;
};

void add_post_options(CLI::App* sub, PostArgs& p) {
  sub->add_option("--archive", p.archive, "fit archive")->required();
  sub->add_option("--data", p.data, "dataset used for the fit")->required();
  sub->add_option("--out", p.out, "output CSV (default stdout)");
  sub->add_option("--seed", p.seed, "random seed");
  sub->add_option("--threads", p.threads, "worker threads")->check(CLI::PositiveNumber);
}

int run_postprob(const PostArgs& p) {
  const auto l = load_fit(p.archive, p.data);
  const auto post = posterior_probs(l.fm, p.threads);
  const int G = l.model->st.G;
  std::vector<std::string> header{l.model->spec.subject, "class"};
  for (int g = 0; g < G; ++g) header.push_back("prob" + std::to_string(g + 1));
  if (post.prob_y) {
    header.push_back("classY");
    for (int g = 0; g < G; ++g) header.push_back("probY" + std::to_string(g + 1));
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < post.ids.size(); ++i) {
    std::vector<std::string> r{post.ids[i], std::to_string(post.cls[i] + 1)};
    for (int g = 0; g < G; ++g) r.push_back(format_double(post.prob(i, g)));
    if (post.prob_y) {
      r.push_back(std::to_string(post.cls_y[i] + 1));
      for (int g = 0; g < G; ++g) r.push_back(format_double((*post.prob_y)(i, g)));
    }
    rows.push_back(std::move(r));
  }
  Output out(p.out);
  write_rows(*out, header, rows);
  return 0;
}

int run_residuals(const PostArgs& p) {
  const auto l = load_fit(p.archive, p.data);
  const auto preds = predictions_residuals(*l.model, l.fm.theta, p.threads);
  const int G = l.model->st.G;
  std::vector<std::string> header{l.model->spec.subject, "marker", l.model->spec.time, "obs", "pred_m", "pred_ss",
                                  "resid_m", "resid_ss"};
  for (int g = 0; g < G; ++g) header.push_back("pred_m" + std::to_string(g + 1));
  for (int g = 0; g < G; ++g) header.push_back("pred_ss" + std::to_string(g + 1));
  std::vector<std::vector<std::string>> rows;
  for (const auto& o : preds) {
    std::vector<std::string> r{l.model->subjects[o.subject].id, l.model->st.markers[o.marker], format_double(o.time),
                               format_double(o.obs), format_double(o.pred_m), format_double(o.pred_ss),
                               format_double(o.res_m()), format_double(o.res_ss())};
    for (int g = 0; g < G; ++g) r.push_back(format_double(o.pred_m_class[g]));
    for (int g = 0; g < G; ++g) r.push_back(format_double(o.pred_ss_class[g]));
    rows.push_back(std::move(r));
  }
  Output out(p.out);
  write_rows(*out, header, rows);
  return 0;
}

void push_band(std::vector<std::string>& r, const Band& b) {
  r.push_back(format_double(b.value));
  r.push_back(format_double(b.lower));
  r.push_back(format_double(b.median));
  r.push_back(format_double(b.upper));
}

const std::vector<std::string> kBandHeader{"estimate", "lower", "median", "upper"};

int run_predict(const PostArgs& p, const std::string& newdata, const std::string& scale,
                const std::string& integration, int mc) {
  const auto l = load_fit(p.archive, p.data);
  PredictOptions o;
  if (scale == "latent") o.scale = Scale::Latent;
  else if (scale == "outcome") o.scale = Scale::Outcome;
  else throw Error("--scale must be latent or outcome");
  if (integration == "mc") o.integration = Integration::MonteCarlo;
  else if (integration == "gh") o.integration = Integration::GaussHermite;
  else throw Error("--integration must be mc or gh");
  o.mc_samples = mc;
  o.draws = p.draws;
  o.seed = p.seed;
  o.threads = p.threads;
  const auto t = predict_trajectory(*l.model, l.fm.theta, l.fm.opt.covariance, read_csv(newdata), o);
  if (t.correlation_neglected)
    std::cerr << "note: Gauss-Hermite integration neglects the correlation between repeated measurements\n";
  std::vector<std::string> header{"row", l.model->spec.time, "marker", "class"};
  header.insert(header.end(), kBandHeader.begin(), kBandHeader.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : t.points) {
    std::vector<std::string> r{std::to_string(pt.row + 1), format_double(pt.time),
                               pt.marker < 0 ? "latent" : l.model->st.markers[pt.marker],
                               pt.cls < 0 ? "marginal" : std::to_string(pt.cls + 1)};
    push_band(r, pt.band);
    rows.push_back(std::move(r));
  }
  Output out(p.out);
  write_rows(*out, header, rows);
  return 0;
}

int run_link(const PostArgs& p, int nsim) {
  const auto l = load_fit(p.archive, p.data);
  const auto pts = predict_link(*l.model, l.fm.theta, l.fm.opt.covariance, nsim, p.draws, p.seed);
  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : pts) {
    const bool draws = p.draws > 0;
    rows.push_back({l.model->st.markers[pt.marker], format_double(pt.y),
                    format_double(draws ? pt.band.median : pt.band.value),
                    format_double(draws ? pt.band.lower : pt.band.value),
                    format_double(draws ? pt.band.upper : pt.band.value)});
  }
  Output out(p.out);
  write_rows(*out, {"marker", "y", "median", "lower", "upper"}, rows);
  return 0;
}

int run_cuminc(const PostArgs& p, const std::string& profile, const std::string& times) {
  const auto l = load_fit(p.archive, p.data);
  const auto pts = cumulative_incidence(*l.model, l.fm.theta, l.fm.opt.covariance, read_csv(profile),
                                        parse_doubles(times), p.draws, p.seed, p.threads);
  std::vector<std::string> header{"time", "cause", "class"};
  header.insert(header.end(), kBandHeader.begin(), kBandHeader.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : pts) {
    std::vector<std::string> r{format_double(pt.time), std::to_string(pt.cause + 1),
                               pt.cls < 0 ? "marginal" : std::to_string(pt.cls + 1)};
    push_band(r, pt.band);
    rows.push_back(std::move(r));
  }
  Output out(p.out);
  write_rows(*out, header, rows);
  return 0;
}

int run_dynpred(const PostArgs& p, const std::string& history, const std::string& landmarks,
                const std::string& horizons) {
  const auto l = load_fit(p.archive, p.data);
  const auto pts = dynamic_prediction(*l.model, l.fm.theta, l.fm.opt.covariance, read_csv(history),
                                      parse_doubles(landmarks), parse_doubles(horizons), p.draws, p.seed, p.threads);
  std::vector<std::string> header{l.model->spec.subject, "landmark", "horizon", "cause"};
  header.insert(header.end(), kBandHeader.begin(), kBandHeader.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : pts) {
    std::vector<std::string> r{pt.id, format_double(pt.landmark), format_double(pt.horizon),
                               std::to_string(pt.cause + 1)};
    push_band(r, pt.band);
    rows.push_back(std::move(r));
  }
  Output out(p.out);
  write_rows(*out, header, rows);
  return 0;
}

int run_varexpl(const PostArgs& p, const std::string& at) {
  const auto l = load_fit(p.archive, p.data);
  const auto v = var_explained(*l.model, l.fm.theta, read_csv(at));
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : v)
    rows.push_back({std::to_string(e.row + 1), format_double(e.time), std::to_string(e.cls + 1),
                    l.model->st.markers[e.marker], format_double(e.percent)});
  Output out(p.out);
  write_rows(*out, {"row", l.model->spec.time, "class", "marker", "percent"}, rows);
  return 0;
}

// Simulates from the estimates on the observed design and refits from them.
int run_simulate_check(const PostArgs& p) {
  const auto l = load_fit(p.archive, p.data);
  const DataTable sim = simulate_outcomes(*l.model, l.fm.theta, l.data, p.seed);
  const auto m = validate_and_build(l.model->spec, sim);
  if (m->layout.size() != l.model->layout.size()) throw Error("simulated data changed the model dimension");
  FitOptions opts;
  opts.conv = l.fm.conv;
  opts.threads = p.threads;
  opts.mask = l.fm.mask;
  const FittedModel fm = fit_model(m, l.fm.theta, opts);
  const Vec se = fm.se();
  std::vector<std::vector<std::string>> rows;
  for (int v = 0; v < fm.theta.size(); ++v) {
    const double z = (fm.theta[v] - l.fm.theta[v]) / se[v];
    rows.push_back({m->layout.slots[v].name, format_double(l.fm.theta[v]), format_double(fm.theta[v]),
                    format_double(se[v]), fm.is_free(v) ? format_double(z) : "NA",
                    fm.is_free(v) && std::abs(z) <= 3.0 ? "1" : "0"});
  }
  Output out(p.out);
  write_rows(*out, {"parameter", "true", "estimate", "se", "z", "within3se"}, rows);
  std::cerr << "refit status: " << to_string(fm.opt.status) << ", iterations " << fm.opt.iterations << "\n";
  return exit_code(fm);
}

CovariateGen parse_covariate(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 2) throw Error("covariate must be name:binary[:p], name:normal[:mean:sd] or name:uniform[:a:b]");
  CovariateGen c;
  c.name = parts[0];
  auto num = [&](std::size_t i, double def) { return parts.size() > i ? std::stod(parts[i]) : def; };
  if (parts[1] == "binary") {
    c.kind = CovariateGen::Kind::Binary;
    c.a = num(2, 0.5);
  } else if (parts[1] == "normal") {
    c.kind = CovariateGen::Kind::Normal;
    c.a = num(2, 0.0);
    c.b = num(3, 1.0);
  } else if (parts[1] == "uniform") {
    c.kind = CovariateGen::Kind::Uniform;
    c.a = num(2, 0.0);
    c.b = num(3, 1.0);
  } else {
    throw Error("unknown covariate distribution '" + parts[1] + "'");
  }
  return c;
}

struct SimArgs {
  std::string model, params, out, visits = "0,1,2,3,4,5", classes_out;
  std::vector<std::string> covariates;
  int subjects = 100;
  double jitter = 0.0, censor_time = std::numeric_limits<double>::infinity(), censor_rate = 0.0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimArgs& a) {
  const ModelSpec spec = read_spec(a.model);
  SimDesign d;
  d.n_subjects = a.subjects;
  d.visits = parse_doubles(a.visits);
  d.jitter = a.jitter;
  for (const auto& c : a.covariates) d.covariates.push_back(parse_covariate(c));
  d.censor_time = a.censor_time;
  d.censor_rate = a.censor_rate;
  d.seed = a.seed;
  const auto m = validate_and_build(spec, simulate_skeleton(spec, d));
  const json pj = read_json(a.params);
  Vec theta(m->layout.size());
  if (pj.is_array()) {
    const auto v = pj.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != m->layout.size())
      throw Error("parameter file has " + std::to_string(v.size()) + " values, model has " +
                  std::to_string(m->layout.size()));
    for (int i = 0; i < m->layout.size(); ++i) theta[i] = v[i];
  } else {
    const auto& ps = pj.at("parameters");
    if (static_cast<int>(ps.size()) != m->layout.size()) throw Error("parameter archive does not match the model");
    for (int i = 0; i < m->layout.size(); ++i) theta[i] = ps[i].at("value").get<double>();
  }
  std::vector<int> classes;
  DataTable t = simulate(*m, theta, d, &classes);
  Output out(a.out);
  write_csv(*out, t);
  if (!a.classes_out.empty()) {
    std::ofstream f(a.classes_out);
    f << "subject,class\n";
    for (std::size_t i = 0; i < classes.size(); ++i) f << i + 1 << "," << classes[i] + 1 << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent class mixed models, latent process models and joint latent class models"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "estimate a model and write an archive");
  fit->add_option("--model", fa.model, "model file (JSON)")->required();
  fit->add_option("--data", fa.data, "data file (CSV, long format)")->required();
  fit->add_option("--out", fa.out, "archive to write");
  fit->add_option("--summary", fa.summary_out, "also write the summary to this file");
  fit->add_option("--seed", fa.seed, "random seed");
  fit->add_option("--threads", fa.threads, "worker threads")->check(CLI::PositiveNumber);
  fit->add_option("--convB", fa.conv_b, "parameter stability threshold");
  fit->add_option("--convL", fa.conv_l, "log-likelihood stability threshold");
  fit->add_option("--convG", fa.conv_g, "relative distance threshold");
  fit->add_option("--maxiter", fa.maxiter, "iteration cap (default by family)");
  fit->add_option("--gridsearch", fa.gridsearch, "rep,maxiter");
  fit->add_option("--init", fa.init, "default, from:<archive> or random:<archive>");
  fit->add_option("--posfix", fa.posfix, "1-based parameter indices held at their initial values");

  auto* summary = app.add_subcommand("summary", "print the summary of an archive");
  std::string s_archive, s_data;
  summary->add_option("--archive", s_archive)->required();
  summary->add_option("--data", s_data)->required();

  auto* table = app.add_subcommand("summarytable", "compare archives");
  std::vector<std::string> t_archives;
  table->add_option("archives", t_archives, "archives")->required();

  PostArgs pp, pr, pd, pl, pc, pdy, pv, psc;
  auto* postprob = app.add_subcommand("postprob", "posterior class-membership probabilities");
  add_post_options(postprob, pp);
  auto* resid = app.add_subcommand("residuals", "marginal and subject-specific predictions and residuals");
  add_post_options(resid, pr);

  auto* predict = app.add_subcommand("predict", "class-specific trajectories for covariate profiles");
  add_post_options(predict, pd);
  std::string newdata, scale = "latent", integration = "mc";
  int mc = 2000;
  predict->add_option("--newdata", newdata, "covariate profile CSV")->required();
  predict->add_option("--scale", scale, "latent or outcome");
  predict->add_option("--integration", integration, "mc or gh");
  predict->add_option("--mc", mc, "Monte Carlo samples for the outcome scale");
  predict->add_option("--draws", pd.draws, "parameter draws for bands (e.g. 2000)");

  auto* link = app.add_subcommand("link", "estimated link functions");
  add_post_options(link, pl);
  int nsim = 100;
  link->add_option("--nsim", nsim, "grid size");
  link->add_option("--draws", pl.draws, "parameter draws for bands");

  auto* cuminc = app.add_subcommand("cuminc", "cumulative incidences");
  add_post_options(cuminc, pc);
  std::string profile, times;
  cuminc->add_option("--profile", profile, "covariate profile CSV (first row)")->required();
  cuminc->add_option("--times", times, "comma-separated times")->required();
  cuminc->add_option("--draws", pc.draws, "parameter draws for bands");

  auto* dynpred = app.add_subcommand("dynpred", "individual dynamic predictions");
  add_post_options(dynpred, pdy);
  std::string history, landmarks, horizons;
  dynpred->add_option("--history", history, "subject histories CSV")->required();
  dynpred->add_option("--landmarks", landmarks, "comma-separated landmark times")->required();
  dynpred->add_option("--horizons", horizons, "comma-separated horizons")->required();
  dynpred->add_option("--draws", pdy.draws, "parameter draws for bands");

  auto* varexpl = app.add_subcommand("varexpl", "percentage of variance explained by the latent process");
  add_post_options(varexpl, pv);
  std::string at;
  varexpl->add_option("--at", at, "covariate/time values CSV")->required();

  auto* simcheck = app.add_subcommand("simulate-check", "simulate from the estimates and refit");
  add_post_options(simcheck, psc);

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "simulate a dataset from a model");
  sim->add_option("--model", sa.model, "model file (JSON)")->required();
  sim->add_option("--params", sa.params, "archive or JSON array of parameter values")->required();
  sim->add_option("--out", sa.out, "output CSV (default stdout)");
  sim->add_option("--subjects", sa.subjects, "number of subjects");
  sim->add_option("--visits", sa.visits, "comma-separated visit times");
  sim->add_option("--jitter", sa.jitter, "uniform visit jitter");
  sim->add_option("--covariate", sa.covariates, "name:binary[:p], name:normal[:m:sd], name:uniform[:a:b]");
  sim->add_option("--censor-time", sa.censor_time, "administrative censoring time");
  sim->add_option("--censor-rate", sa.censor_rate, "exponential censoring rate");
  sim->add_option("--seed", sa.seed, "random seed");
  sim->add_option("--classes-out", sa.classes_out, "write the true classes to this CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return run_fit(fa);
    if (*summary) {
      const auto l = load_fit(s_archive, s_data);
      std::cout << summary_text(l.fm, l.fm.conv);
      return 0;
    }
    if (*table) {
      std::vector<json> archives;
      for (const auto& a : t_archives) archives.push_back(read_json(a));
      std::vector<std::string> warnings;
      std::cout << summarytable_text(archives, t_archives, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (*postprob) return run_postprob(pp);
    if (*resid) return run_residuals(pr);
    if (*predict) return run_predict(pd, newdata, scale, integration, mc);
    if (*link) return run_link(pl, nsim);
    if (*cuminc) return run_cuminc(pc, profile, times);
    if (*dynpred) return run_dynpred(pdy, history, landmarks, horizons);
    if (*varexpl) return run_varexpl(pv, at);
    if (*simcheck) return run_simulate_check(psc);
    if (*sim) return run_simulate(sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
