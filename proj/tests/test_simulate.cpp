#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "latmix/simulate.hpp"

using namespace latmix;
using namespace testing_util;

namespace {

ModelSpec hlme2() {
  ModelSpec s;
  s.family = Family::Hlme;
  s.subject = "id";
  s.time = "t";
  s.outcomes = {"y"};
  s.fixed = terms({"1", "t"});
  s.mixture = terms({"1"});
  s.random = terms({"1"});
  s.ng = 2;
  return s;
}

ModelSpec exp_joint() {
  ModelSpec s;
  s.family = Family::Jointlcmm;
  s.subject = "id";
  s.time = "t";
  s.outcomes = {"y"};
  s.fixed = terms({"1"});
  SurvivalSpec sv;
  sv.time = "T";
  sv.event = "E";
  s.survival = sv;
  return s;
}

std::shared_ptr<const ValidatedModel> template_model(const ModelSpec& s, const SimDesign& d) {
  return validate_and_build(s, simulate_skeleton(s, d));
}

}  // namespace

TEST_CASE("simulation is deterministic in the seed") {
  SimDesign d;
  d.n_subjects = 50;
  d.jitter = 0.2;
  d.covariates = {{"x", CovariateGen::Kind::Normal, 0.0, 1.0}};
  auto s = hlme2();
  s.fixed.push_back(parse_term("x"));
  const auto m = template_model(s, d);
  std::mt19937_64 gen(1);
  const Vec th = random_theta(*m, gen);
  const auto a = simulate(*m, th, d);
  const auto b = simulate(*m, th, d);
  CHECK(a.numeric == b.numeric);
  d.seed = 2;
  const auto c = simulate(*m, th, d);
  CHECK(a.numeric != c.numeric);
}

TEST_CASE("class frequencies follow the class-membership model") {
  SimDesign d;
  d.n_subjects = 4000;
  d.visits = {0.0};
  const auto m = template_model(hlme2(), d);
  Vec th = init_default(*m);
  th[m->layout.find("intercept class1")] = std::log(0.3 / 0.7);
  std::vector<int> cls;
  simulate(*m, th, d, &cls);
  REQUIRE(cls.size() == 4000u);
  const double f = std::count(cls.begin(), cls.end(), 0) / 4000.0;
  CHECK(std::abs(f - 0.3) < 3.0 * std::sqrt(0.3 * 0.7 / 4000.0));
}

TEST_CASE("outcome moments at the first visit") {
  SimDesign d;
  d.n_subjects = 4000;
  d.visits = {0.0, 1.0};
  auto s = hlme2();
  s.ng = 1;
  s.mixture.clear();
  const auto m = template_model(s, d);
  Vec th = init_default(*m);
  th[m->layout.find("intercept")] = 2.0;
  th[m->layout.find("t")] = -1.0;
  th[m->layout.find("varcov 1")] = 1.5;
  th[m->layout.find("stderr")] = 0.5;
  const auto t = simulate(*m, th, d);
  const int ct = t.column("t"), cy = t.column("y");
  double s1 = 0.0, s2 = 0.0;
  int n = 0;
  for (int r = 0; r < t.rows(); ++r)
    if (t.numeric[ct][r] == 0.0) {
      s1 += t.numeric[cy][r];
      s2 += t.numeric[cy][r] * t.numeric[cy][r];
      ++n;
    }
  const double mean = s1 / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean - 2.0) < 4.0 * std::sqrt(2.5 / n));
  CHECK(std::abs(var - 2.5) < 0.15);
}

TEST_CASE("exponential event times pass a Kolmogorov-Smirnov check") {
  SimDesign d;
  d.n_subjects = 2000;
  d.visits = {0.0};
  const auto m = template_model(exp_joint(), d);
  Vec th = init_default(*m);
  // Weibull with shape 1 and rate 0.5
  th[m->layout.find("event1 +/-sqrt(Weibull1)")] = std::sqrt(0.5);
  th[m->layout.find("event1 +/-sqrt(Weibull2)")] = 1.0;
  const auto t = simulate(*m, th, d);
  const int cid = t.column("id"), cT = t.column("T"), cE = t.column("E");
  std::vector<double> times;
  for (int r = 0; r < t.rows(); ++r)
    if (r == 0 || t.numeric[cid][r] != t.numeric[cid][r - 1]) {
      CHECK(t.numeric[cE][r] == 1.0);
      times.push_back(t.numeric[cT][r]);
    }
  REQUIRE(times.size() == 2000u);
  std::sort(times.begin(), times.end());
  double ks = 0.0;
  const double n = static_cast<double>(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double f = 1.0 - std::exp(-0.5 * times[i]);
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks < 1.36 / std::sqrt(n));
}

TEST_CASE("administrative censoring") {
  SimDesign d;
  d.n_subjects = 300;
  d.visits = {0.0, 0.5, 1.0, 1.5};
  d.censor_time = 1.0;
  const auto m = template_model(exp_joint(), d);
  Vec th = init_default(*m);
  th[m->layout.find("event1 +/-sqrt(Weibull1)")] = std::sqrt(0.5);
  th[m->layout.find("event1 +/-sqrt(Weibull2)")] = 1.0;
  const auto t = simulate(*m, th, d);
  const int cT = t.column("T"), cE = t.column("E"), ct = t.column("t");
  for (int r = 0; r < t.rows(); ++r) {
    CHECK(t.numeric[cT][r] <= 1.0);
    if (t.numeric[cT][r] == 1.0) CHECK(t.numeric[cE][r] == 0.0);
    CHECK(t.numeric[ct][r] <= t.numeric[cT][r]);
  }
}

TEST_CASE("cumulative hazard inversion") {
  const auto f = [](double t) { return t * t; };
  CHECK(invert_cumulative(f, 4.0, 0.0, 10.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(invert_cumulative(f, 400.0, 0.0, 10.0) == 10.0);
}
