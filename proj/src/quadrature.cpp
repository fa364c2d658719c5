#include "latmix/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "latmix/error.hpp"

namespace latmix {

namespace {

// Three-term recurrence x p_k = a_{k+1} p_{k+1} + a_k p_{k-1} for orthonormal
// polynomials; returns p_n(x) and the sum of p_k(x)^2 for k < n.
template <class Coef>
std::pair<double, double> orthonormal_eval(int n, double x, Coef a, double* prev = nullptr) {
  double pm1 = 0.0, p = 1.0, s = 0.0;
  for (int k = 0; k < n; ++k) {
    s += p * p;
    const double next = (x * p - (k == 0 ? 0.0 : a(k)) * pm1) / a(k + 1);
    pm1 = p;
    p = next;
  }
  if (prev) *prev = pm1;
  return {p, s};
}

double hermite_coef(int k) { return std::sqrt(static_cast<double>(k)); }
double legendre_coef(int k) {
  const double kk = k;
  return kk / std::sqrt(4 * kk * kk - 1);
}

void symmetrize(std::vector<double>& x, std::vector<double>& w) {
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n / 2; ++i) {
    const double xm = 0.5 * (x[n - 1 - i] - x[i]);
    const double wm = 0.5 * (w[i] + w[n - 1 - i]);
    x[i] = -xm;
    x[n - 1 - i] = xm;
    w[i] = w[n - 1 - i] = wm;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
}

Eigen::VectorXd jacobi_eigenvalues(const Eigen::VectorXd& offdiag) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = offdiag[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1 || n > 100) throw Error("gauss_hermite: n must lie in [1, 100]");
  Eigen::VectorXd off(n - 1);
  for (int i = 0; i + 1 < n; ++i) off[i] = hermite_coef(i + 1);
  const Eigen::VectorXd ev = jacobi_eigenvalues(off);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double t = ev[i];
    for (int it = 0; it < 10; ++it) {
      double pm1 = 0.0;
      const double p = orthonormal_eval(n, t, hermite_coef, &pm1).first;
      const double dp = std::sqrt(static_cast<double>(n)) * pm1;
      if (dp == 0.0) break;
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16 * (1.0 + std::abs(t))) break;
    }
    x[i] = t;
    w[i] = 1.0 / orthonormal_eval(n, t, hermite_coef).second;
  }
  symmetrize(x, w);
  return {QuadratureKind::GaussHermite, std::move(x), std::move(w)};
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw Error("gauss_legendre: n must be positive");
  if (!(a < b)) throw Error("gauss_legendre: interval must satisfy a < b");
  Eigen::VectorXd off(n - 1);
  for (int i = 0; i + 1 < n; ++i) off[i] = legendre_coef(i + 1);
  const Eigen::VectorXd ev = jacobi_eigenvalues(off);
  const double nn = n;
  const double ratio = std::sqrt((2 * nn + 1) / (2 * nn - 1));
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double t = ev[i];
    for (int it = 0; it < 10; ++it) {
      double pm1 = 0.0;
      const double p = orthonormal_eval(n, t, legendre_coef, &pm1).first;
      const double dp = nn * (ratio * pm1 - t * p) / (1 - t * t);
      if (dp == 0.0 || !std::isfinite(dp)) break;
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[i] = t;
    w[i] = 1.0 / orthonormal_eval(n, t, legendre_coef).second;
  }
  symmetrize(x, w);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    x[i] = mid + half * x[i];
    w[i] *= b - a;
  }
  return {QuadratureKind::GaussLegendre, std::move(x), std::move(w)};
}

}  // namespace latmix
