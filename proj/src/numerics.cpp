#include "latmix/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "latmix/error.hpp"

namespace latmix {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double normal_logpdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Vec CholeskyFactor::solve(const Vec& b) const {
  Vec z = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(z);
}

std::optional<CholeskyFactor> cholesky(const Mat& a) {
  if (a.rows() != a.cols()) throw Error("cholesky: matrix is not square");
  const Eigen::Index n = a.rows();
  Mat l = Mat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  CholeskyFactor out;
  out.log_det = 2.0 * l.diagonal().array().log().sum();
  out.lower = std::move(l);
  return out;
}

double mvn_logdensity(const Vec& y, const Vec& mu, const CholeskyFactor& v) {
  if (y.size() != mu.size() || y.size() != v.dim())
    throw Error("mvn_logdensity: dimension mismatch");
  const Vec z = v.lower.triangularView<Eigen::Lower>().solve(y - mu);
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + v.log_det + z.squaredNorm());
}

std::optional<double> mvn_logdensity(const Vec& y, const Vec& mu, const Mat& v) {
  if (v.rows() != y.size()) throw Error("mvn_logdensity: dimension mismatch");
  auto f = cholesky(v);
  if (!f) return std::nullopt;
  return mvn_logdensity(y, mu, *f);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(threads, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double fd_step(double x) { return std::max(1e-7, 1e-4 * std::abs(x)); }

namespace {

std::vector<int> free_indices(const Vec& theta, const std::vector<bool>& mask) {
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != theta.size())
    throw Error("finite differences: mask length does not match parameter vector");
  std::vector<int> idx;
  for (int v = 0; v < theta.size(); ++v)
    if (mask.empty() || mask[v]) idx.push_back(v);
  return idx;
}

// Evaluates f at every probe; results land in slots by index.
std::optional<std::vector<double>> eval_probes(const ObjectiveFn& f,
                                               const std::vector<Vec>& probes,
                                               int threads) {
  std::vector<double> out(probes.size());
  parallel_for(static_cast<int>(probes.size()), threads,
               [&](int i) { out[i] = f(probes[i]); });
  for (double v : out)
    if (!std::isfinite(v)) return std::nullopt;
  return out;
}

}  // namespace

std::optional<Vec> fd_gradient(const ObjectiveFn& f, const Vec& theta,
                               const std::vector<bool>& mask, int threads) {
  const auto idx = free_indices(theta, mask);
  std::vector<Vec> probes;
  probes.reserve(2 * idx.size());
  for (int v : idx) {
    const double h = fd_step(theta[v]);
    Vec p = theta;
    p[v] += h;
    probes.push_back(p);
    p[v] = theta[v] - h;
    probes.push_back(std::move(p));
  }
  auto vals = eval_probes(f, probes, threads);
  if (!vals) return std::nullopt;
  Vec g = Vec::Zero(theta.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int v = idx[k];
    const double h = fd_step(theta[v]);
    g[v] = ((*vals)[2 * k] - (*vals)[2 * k + 1]) / (2.0 * h);
  }
  return g;
}

namespace {

struct ProbePlan {
  std::vector<int> idx;
  std::vector<Vec> probes;
  // probe positions
  std::vector<int> plus, minus, twice;
  std::vector<std::vector<int>> cross;
};

ProbePlan plan_probes(const Vec& theta, const std::vector<bool>& mask, bool central) {
  ProbePlan plan;
  plan.idx = free_indices(theta, mask);
  const int n = static_cast<int>(plan.idx.size());
  auto add = [&](Vec p) {
    plan.probes.push_back(std::move(p));
    return static_cast<int>(plan.probes.size()) - 1;
  };
  plan.cross.assign(n, std::vector<int>(n, -1));
  for (int a = 0; a < n; ++a) {
    const int u = plan.idx[a];
    const double h = fd_step(theta[u]);
    Vec p = theta;
    p[u] += h;
    plan.plus.push_back(add(p));
    p[u] = theta[u] + 2.0 * h;
    plan.twice.push_back(add(p));
    if (central) {
      p[u] = theta[u] - h;
      plan.minus.push_back(add(p));
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const int u = plan.idx[a], v = plan.idx[b];
      Vec p = theta;
      p[u] += fd_step(theta[u]);
      p[v] += fd_step(theta[v]);
      plan.cross[a][b] = add(std::move(p));
    }
  }
  return plan;
}

Mat assemble_hessian(const Vec& theta, const ProbePlan& plan,
                     const std::vector<double>& vals, double f0) {
  const int n = static_cast<int>(plan.idx.size());
  Mat h = Mat::Zero(theta.size(), theta.size());
  for (int a = 0; a < n; ++a) {
    const int u = plan.idx[a];
    const double hu = fd_step(theta[u]);
    h(u, u) = (vals[plan.twice[a]] - 2.0 * vals[plan.plus[a]] + f0) / (hu * hu);
    for (int b = a + 1; b < n; ++b) {
      const int v = plan.idx[b];
      const double hv = fd_step(theta[v]);
      const double d =
          (vals[plan.cross[a][b]] - vals[plan.plus[a]] - vals[plan.plus[b]] + f0) / (hu * hv);
      h(u, v) = d;
      h(v, u) = d;
    }
  }
  return h;
}

}  // namespace

std::optional<Mat> fd_hessian(const ObjectiveFn& f, const Vec& theta,
                              const std::vector<bool>& mask, int threads,
                              std::optional<double> f0) {
  const double base = f0 ? *f0 : f(theta);
  if (!std::isfinite(base)) return std::nullopt;
  const auto plan = plan_probes(theta, mask, false);
  auto vals = eval_probes(f, plan.probes, threads);
  if (!vals) return std::nullopt;
  return assemble_hessian(theta, plan, *vals, base);
}

std::optional<Derivatives> fd_derivatives(const ObjectiveFn& f, const Vec& theta,
                                          const std::vector<bool>& mask, double f0,
                                          int threads) {
  if (!std::isfinite(f0)) return std::nullopt;
  const auto plan = plan_probes(theta, mask, true);
  auto vals = eval_probes(f, plan.probes, threads);
  if (!vals) return std::nullopt;
  Derivatives d;
  d.hessian = assemble_hessian(theta, plan, *vals, f0);
  d.gradient = Vec::Zero(theta.size());
  for (std::size_t a = 0; a < plan.idx.size(); ++a) {
    const int v = plan.idx[a];
    d.gradient[v] = ((*vals)[plan.plus[a]] - (*vals)[plan.minus[a]]) / (2.0 * fd_step(theta[v]));
  }
  return d;
}

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return splitmix64(mix_seed(mix_seed(seed_, stream_), counter));
}

double CounterRng::uniform(std::uint64_t counter) const {
  // 53 random bits, shifted off zero
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t k) const {
  const double u1 = uniform(2 * k);
  const double u2 = uniform(2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int RngStream::categorical(std::span<const double> probs) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t g = 0; g < probs.size(); ++g) {
    acc += probs[g];
    if (u < acc) return static_cast<int>(g);
  }
  return static_cast<int>(probs.size()) - 1;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Mat psd_sqrt(const Mat& a) {
  if (a.rows() == 0) return a;
  if (auto c = cholesky(a)) return c->lower;
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace latmix
