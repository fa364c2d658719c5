#include "latmix/optimizer.hpp"

#include <cmath>
#include <limits>

#include "latmix/error.hpp"

namespace latmix {

std::string to_string(OptStatus s) {
  switch (s) {
    case OptStatus::Converged: return "converged";
    case OptStatus::MaxIter: return "maximum number of iterations reached";
    case OptStatus::Failed: return "failed";
  }
  return "failed";
}

Mat inflate_once(const Mat& h, double lambda, double eta) {
  double t = std::abs(h.trace());
  if (t == 0.0) t = h.diagonal().cwiseAbs().sum();
  if (t == 0.0) t = 1.0;
  Mat out = h;
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    out(i, i) += lambda * ((1.0 - eta) * std::abs(h(i, i)) + eta * t);
  return out;
}

namespace {
constexpr double kLambdaMax = 1e12;
constexpr double kLambdaMin = 1e-12;
constexpr double kEtaMax = 0.5;
}  // namespace

void Inflation::escalate() {
  lambda *= 10.0;
  eta = std::min(eta * 10.0, kEtaMax);
}

std::optional<Mat> Inflation::make_pd(const Mat& h) {
  if (cholesky(h)) return h;
  while (lambda <= kLambdaMax) {
    Mat ht = inflate_once(h, lambda, eta);
    if (cholesky(ht)) {
      lambda = std::max(lambda / 10.0, kLambdaMin);
      eta = std::max(eta / 10.0, kLambdaMin);
      return ht;
    }
    escalate();
  }
  return std::nullopt;
}

std::optional<Mat> covariance_from_hessian(const Mat& h, const std::vector<bool>& mask) {
  const int n = static_cast<int>(h.rows());
  std::vector<int> idx;
  for (int v = 0; v < n; ++v)
    if (mask.empty() || mask[v]) idx.push_back(v);
  const int nf = static_cast<int>(idx.size());
  Mat hf(nf, nf);
  for (int a = 0; a < nf; ++a)
    for (int b = 0; b < nf; ++b) hf(a, b) = h(idx[a], idx[b]);
  const auto c = cholesky(hf);
  if (!c) return std::nullopt;
  Mat inv(nf, nf);
  for (int b = 0; b < nf; ++b) inv.col(b) = c->solve(Vec::Unit(nf, b));
  Mat out = Mat::Zero(n, n);
  for (int a = 0; a < nf; ++a)
    for (int b = 0; b < nf; ++b) out(idx[a], idx[b]) = 0.5 * (inv(a, b) + inv(b, a));
  return out;
}

OptResult marquardt_maximize(const ObjectiveFn& f, const Vec& theta0, const std::vector<bool>& mask,
                             const ConvergenceSettings& settings, int threads) {
  const int n = static_cast<int>(theta0.size());
  std::vector<int> idx;
  for (int v = 0; v < n; ++v)
    if (mask.empty() || mask[v]) idx.push_back(v);
  const int nf = static_cast<int>(idx.size());

  OptResult res;
  res.theta = theta0;
  res.loglik = f(theta0);
  res.hessian = Mat::Zero(n, n);
  if (!std::isfinite(res.loglik)) throw Error("log-likelihood is not finite at the initial values");
  if (nf == 0) {
    res.status = OptStatus::Converged;
    res.message = "no free parameters";
    return res;
  }

  Inflation infl;
  bool have_step = false;
  double ca = 0.0, cb = 0.0;
  Vec theta = theta0;
  double loglik = res.loglik;

  while (true) {
    const auto d = fd_derivatives(f, theta, mask, loglik, threads);
    if (!d) {
      res.status = OptStatus::Failed;
      res.message = "log-likelihood not finite at a finite-difference probe";
      break;
    }
    res.hessian = -d->hessian;
    Vec g(nf);
    Mat hf(nf, nf);
    for (int a = 0; a < nf; ++a) {
      g[a] = d->gradient[idx[a]];
      for (int b = 0; b < nf; ++b) hf(a, b) = res.hessian(idx[a], idx[b]);
    }

    double rdm = std::numeric_limits<double>::infinity();
    res.deriv_inflated = false;
    if (auto c = cholesky(hf)) {
      rdm = g.dot(c->solve(g)) / nf;
    } else {
      Inflation probe = infl;
      if (auto ht = probe.make_pd(hf)) {
        rdm = g.dot(cholesky(*ht)->solve(g)) / nf;
        res.deriv_inflated = true;
      }
    }
    res.crit_params = ca;
    res.crit_loglik = cb;
    res.crit_deriv = rdm;
    if (have_step && ca <= settings.eps_a && cb <= settings.eps_b && rdm <= settings.eps_d) {
      res.status = OptStatus::Converged;
      res.message = "convergence criteria satisfied";
      break;
    }
    if (res.iterations >= settings.maxiter) {
      res.status = OptStatus::MaxIter;
      res.message = "maximum number of iterations reached without convergence";
      break;
    }

    auto ht = infl.make_pd(hf);
    if (!ht) {
      res.status = OptStatus::Failed;
      res.message = "Hessian could not be made positive definite";
      break;
    }
    bool accepted = false;
    Vec next = theta;
    double next_ll = loglik;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      const auto c = cholesky(*ht);
      if (!c) break;
      const Vec dir = c->solve(g);
      double delta = 1.0;
      for (int h = 0; h <= 30; ++h, delta *= 0.5) {
        Vec cand = theta;
        for (int a = 0; a < nf; ++a) cand[idx[a]] += delta * dir[a];
        const double lc = f(cand);
        if (std::isfinite(lc) && lc > loglik) {
          next = cand;
          next_ll = lc;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (infl.lambda > kLambdaMax) break;
        ht = inflate_once(hf, infl.lambda, infl.eta);
        infl.escalate();
      }
    }
    if (!accepted) {
      if (ca <= settings.eps_a && cb <= settings.eps_b && rdm <= settings.eps_d) {
        res.status = OptStatus::Converged;
        res.message = "convergence criteria satisfied (no further improving step)";
      } else {
        res.status = OptStatus::Failed;
        res.message = "no improving step found";
      }
      break;
    }
    ca = (next - theta).squaredNorm();
    cb = std::abs(next_ll - loglik);
    theta = next;
    loglik = next_ll;
    have_step = true;
    ++res.iterations;
    res.trace.push_back(loglik);
  }
  res.theta = theta;
  res.loglik = loglik;
  res.covariance = covariance_from_hessian(res.hessian, mask);
  return res;
}

}  // namespace latmix
