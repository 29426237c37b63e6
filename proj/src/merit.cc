#include "quantalm/merit.hpp"

#include <algorithm>
#include <cmath>

namespace quantalm {
namespace {

void CheckSizes(const ConstraintVector& g, const Vector& mu) {
  if (mu.size() != g.size()) throw ConfigError("multiplier count does not match constraint count");
}

double Shifted(double g, double mu, double rho) { return std::max(0.0, g + mu / rho); }

}  // namespace

MeritParams MeritParams::Initial(Index n_constraints, double rho, double mu_max) {
  MeritParams p;
  p.rho = rho;
  p.mu = Vector::Ones(n_constraints);
  p.mu_bar = Vector::Ones(n_constraints).cwiseMin(mu_max);
  p.mu_max = mu_max;
  p.Validate();
  return p;
}

void MeritParams::Validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("penalty rho must be positive");
  if (!(mu_max > 0.0)) throw ConfigError("mu_max must be positive");
  if (mu.size() != mu_bar.size()) throw ConfigError("mu and mu_bar differ in length");
  if ((mu.array() < 0.0).any()) throw ConfigError("multipliers must be nonnegative");
  if ((mu_bar.array() < 0.0).any() || (mu_bar.array() > mu_max).any()) {
    throw ConfigError("safeguarded multipliers must lie in [0, mu_max]");
  }
}

double MeritValue(double f_val, const ConstraintVector& g, double rho, const Vector& mu) {
  CheckSizes(g, mu);
  double penalty = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const double t = Shifted(g[i], mu[i], rho);
    penalty += t * t;
  }
  return f_val + 0.5 * rho * penalty;
}

double MeritValue(double f_val, const ConstraintVector& g, const MeritParams& p) {
  return MeritValue(f_val, g, p.rho, p.mu_bar);
}

Vector MeritGradient(const Vector& grad_f, const ConstraintVector& g, const Vector& grad_g0,
                     const Matrix& grad_g_det, double rho, const Vector& mu) {
  CheckSizes(g, mu);
  if (grad_g0.size() != grad_f.size() || grad_g_det.rows() != g.g_det.size() ||
      (grad_g_det.rows() > 0 && grad_g_det.cols() != grad_f.size())) {
    throw ConfigError("gradient dimensions disagree");
  }
  Vector out = grad_f + rho * Shifted(g.g0, mu[0], rho) * grad_g0;
  for (Index i = 0; i < g.g_det.size(); ++i) {
    const double t = Shifted(g.g_det[i], mu[i + 1], rho);
    if (t > 0.0) out += rho * t * grad_g_det.row(i).transpose();
  }
  return out;
}

Vector MeritGradient(const Vector& grad_f, const ConstraintVector& g, const Vector& grad_g0,
                     const Matrix& grad_g_det, const MeritParams& p) {
  return MeritGradient(grad_f, g, grad_g0, grad_g_det, p.rho, p.mu_bar);
}

Matrix MeritGaussNewton(const ConstraintVector& g, const Vector& grad_g0, const Matrix& grad_g_det,
                        double rho, const Vector& mu) {
  CheckSizes(g, mu);
  const Index n = grad_g0.size();
  if (grad_g_det.rows() != g.g_det.size() || (grad_g_det.rows() > 0 && grad_g_det.cols() != n)) {
    throw ConfigError("gradient dimensions disagree");
  }
  Matrix h = Matrix::Zero(n, n);
  if (Shifted(g.g0, mu[0], rho) > 0.0) h.selfadjointView<Eigen::Lower>().rankUpdate(grad_g0, rho);
  for (Index i = 0; i < g.g_det.size(); ++i) {
    if (Shifted(g.g_det[i], mu[i + 1], rho) > 0.0) {
      h.selfadjointView<Eigen::Lower>().rankUpdate(grad_g_det.row(i).transpose(), rho);
    }
  }
  return h.selfadjointView<Eigen::Lower>();
}

double FeasibilitySigma(const ConstraintVector& g, const Vector& mu) {
  CheckSizes(g, mu);
  double sum = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const double t = std::min(-g[i], mu[i]);
    sum += t * t;
  }
  return std::sqrt(sum);
}

MeritParams UpdateMultipliers(const ConstraintVector& g, const MeritParams& p) {
  CheckSizes(g, p.mu_bar);
  MeritParams next = p;
  for (Index i = 0; i < g.size(); ++i) {
    next.mu[i] = std::max(0.0, p.mu_bar[i] + p.rho * g[i]);
    next.mu_bar[i] = std::min(p.mu_max, next.mu[i]);
  }
  return next;
}

MeritParams UpdatePenalty(double sigma, double eta, const MeritParams& p, double theta_rho) {
  if (!(theta_rho > 1.0)) throw ConfigError("theta_rho must be > 1");
  MeritParams next = p;
  if (sigma > eta) next.rho *= theta_rho;
  return next;
}

}  // namespace quantalm
