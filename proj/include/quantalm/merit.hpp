#pragma once

#include "quantalm/common.hpp"

namespace quantalm {

// Constraint values in the order of I0 = {0, 1, ..., l2}: the (sampled)
// quantile constraint first, then the deterministic inequalities.
struct ConstraintVector {
  double g0 = 0.0;
  Vector g_det;

  Index size() const { return 1 + g_det.size(); }
  double operator[](Index i) const { return i == 0 ? g0 : g_det[i - 1]; }
};

// Penalty state of the augmented Lagrangian. `mu` are the raw multiplier
// estimates; `mu_bar` the safeguarded copies clipped to [0, mu_max] that
// enter the next inner solve.
struct MeritParams {
  double rho = 10.0;
  Vector mu;
  Vector mu_bar;
  double mu_max = 1e4;

  // mu = mu_bar = 1 for every constraint in I0.
  static MeritParams Initial(Index n_constraints, double rho, double mu_max);

  // Throws ConfigError if rho <= 0, mu < 0, mu_bar outside [0, mu_max] or
  // sizes disagree.
  void Validate() const;
};

// f + rho/2 * sum_i max{0, g_i + mu_i / rho}^2.
double MeritValue(double f_val, const ConstraintVector& g, double rho, const Vector& mu);
// Uses p.mu_bar.
double MeritValue(double f_val, const ConstraintVector& g, const MeritParams& p);

// grad f + rho max{0, g0 + mu0/rho} G + rho sum_i max{0, g_i + mu_i/rho} grad g_i.
// `grad_g_det` holds one constraint gradient per row.
Vector MeritGradient(const Vector& grad_f, const ConstraintVector& g, const Vector& grad_g0,
                     const Matrix& grad_g_det, double rho, const Vector& mu);
Vector MeritGradient(const Vector& grad_f, const ConstraintVector& g, const Vector& grad_g0,
                     const Matrix& grad_g_det, const MeritParams& p);

// rho sum over constraints with g_i + mu_i/rho > 0 of grad g_i grad g_i^T:
// the penalty part of the merit Hessian with constraint curvature dropped.
Matrix MeritGaussNewton(const ConstraintVector& g, const Vector& grad_g0, const Matrix& grad_g_det,
                        double rho, const Vector& mu);

// sqrt(sum_i min{-g_i, mu_i}^2).
double FeasibilitySigma(const ConstraintVector& g, const Vector& mu);

// mu_i <- max{0, mu_bar_i + rho g_i}, mu_bar_i <- min{mu_max, mu_i}.
MeritParams UpdateMultipliers(const ConstraintVector& g, const MeritParams& p);

// rho <- theta_rho * rho iff sigma > eta. Throws ConfigError if theta_rho <= 1.
MeritParams UpdatePenalty(double sigma, double eta, const MeritParams& p, double theta_rho);

}  // namespace quantalm
