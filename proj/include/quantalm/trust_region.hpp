#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "quantalm/common.hpp"
#include "quantalm/merit.hpp"
#include "quantalm/problems.hpp"
#include "quantalm/sampling.hpp"

namespace quantalm {

enum class GradientMethod { kFiniteDifference, kSmoothing };
enum class BetaPolicy { kConstant, kRadiusScaled };
enum class SampleSchedule { kFixed, kGrowing };
// kDirect fits the Hessian of Phi_N itself. kStructured starts from the
// Gauss-Newton penalty curvature (MeritGaussNewton, chance constraint
// included) and fits the rest of f + rho/2 max{0, g0 + mu0/rho}^2 +
// sum_i lambda_i c2_i, with lambda_i frozen at x0. The deterministic
// max{0, .} creases then never enter the fitted values.
enum class HessianModel { kDirect, kStructured };

struct TrustRegionOptions {
  double eta1 = 0.1;   // sufficient model decrease
  double eta2 = 0.25;  // acceptance ratio
  double gamma_inc = 2.0;
  double gamma_dec = 0.5;
  double delta0 = 1.0;
  double r0 = 0.1;  // beta = r0 * delta under kRadiusScaled

  BetaPolicy beta_policy = BetaPolicy::kConstant;
  double beta = 1e-3;

  // kFixed: N_k = n_max. kGrowing: N_k = min(n_max, n0 * ceil(delta^-2)).
  // Unless resample_each_iteration is set, one batch of n_max scenarios is
  // drawn per inner solve and iteration k uses its first N_k rows.
  SampleSchedule sample_schedule = SampleSchedule::kFixed;
  bool resample_each_iteration = false;
  Index n_max = 10000;
  Index n0 = 100;

  GradientMethod gradient_method = GradientMethod::kFiniteDifference;
  std::optional<double> smoothing_epsilon;

  bool fit_hessian = true;
  HessianModel hessian_model = HessianModel::kStructured;
  Index fit_points = 0;  // 0: min((n+1)(n+2)/2, 2n+1)

  int max_iterations = 10000;
  // Verify the subproblem's Cauchy-decrease contract every iteration.
  bool check_cauchy_decrease = false;

  void Validate() const;
  double BetaFor(double delta) const;
  Index SamplesFor(double delta) const;
};

// m(x0 + s) = value + gradient^T s + s^T hessian s / 2.
struct LocalModel {
  Vector x0;
  double value = 0.0;
  Vector gradient;
  Matrix hessian;

  double Evaluate(const Vector& step) const;
  double Decrease(const Vector& step) const { return value - Evaluate(step); }
};

// Phi_N and phi_N for fixed (rho, multipliers) on one scenario batch.
class SampledMerit {
 public:
  SampledMerit(const ProblemSpec& problem, const SampleBatch& batch, double rho, Vector mu);

  double Value(const Vector& x) const;
  // Phi_N(x + step e_k) and its constraints, reusing the scenario values
  // cached at `x` by the last call to Anchor().
  double ShiftedValue(Index k, double step) const;
  ConstraintVector ShiftedConstraints(Index k, double step) const;
  // Caches scenario values at x and returns Phi_N(x).
  double Anchor(const Vector& x);
  ConstraintVector Constraints(const Vector& x) const;
  // With `gauss_newton` set, also stores MeritGaussNewton at x there.
  Vector Gradient(const Vector& x, double beta, GradientMethod method,
                  std::optional<double> smoothing_epsilon, Matrix* gauss_newton = nullptr) const;

  const ProblemSpec& problem() const { return problem_; }
  const SampleBatch& batch() const { return batch_; }

 private:
  double MeritAt(const Vector& x, double g0) const;

  const ProblemSpec& problem_;
  const SampleBatch& batch_;
  double rho_;
  Vector mu_;
  Vector anchor_x_;
  Vector anchor_values_;
  double anchor_quantile_ = 0.0;
  mutable Vector scratch_;
};

// Value and gradient at x0 from the sampled merit. The Hessian adds a
// minimum-Frobenius-norm least-squares fit, over points of B(x0, delta), of
// the second-order residual of Phi_N (kDirect) or of the frozen-multiplier
// Lagrangian (kStructured) to a known part: zero or MeritGaussNewton. All
// evaluations share one batch; an unusable fit leaves the known part.
LocalModel BuildLocalModel(const ProblemSpec& problem, const Vector& x0, const SampleBatch& batch,
                           const MeritParams& params, double delta, double beta,
                           const TrustRegionOptions& options);

// Fit points relative to x0: +-delta e_k, then delta (1,...,1)/sqrt(n),
// then seeded random directions until `count` points.
std::vector<Vector> HessianFitOffsets(Index n, double delta, Index count, std::uint64_t seed);

// Minimum-Frobenius-norm H with s_j^T H s_j / 2 ~= residuals_j.
std::optional<Matrix> FitHessian(const std::vector<Vector>& offsets, const Vector& residuals);

// Two-dimensional subspace minimization on ||s|| <= delta. The subspace is
// spanned by g and the Newton step when H is positive definite, otherwise by
// g and a direction of negative curvature. Contains the Cauchy point, so the
// step never does worse than it.
Vector SolveTrSubproblem(const LocalModel& model, double delta);

// ||g|| min{delta, ||g|| / (1 + ||H||_2)} / 2.
double CauchyDecreaseBound(const LocalModel& model, double delta);

struct TrTraceRow {
  int iteration = 0;
  double delta = 0.0;
  Index samples = 0;
  double model_decrease = 0.0;
  double ratio = 0.0;  // NaN when the model decrease test failed
  bool accepted = false;
  double merit = 0.0;  // Phi_N at the iterate, this iteration's batch
  double gradient_norm = 0.0;
};

struct TrResult {
  Vector x;
  double delta = 0.0;
  std::vector<TrTraceRow> trace;
  bool truncated = false;
};

// Inner solver for fixed (rho, mu_bar). Model, Phi_N(x) and Phi_N(x + s)
// of one iteration always share a batch. By default the batch is drawn once
// from `seed`; with resample_each_iteration iteration k draws a fresh one
// from DeriveSeed(seed, {k}). Stops once delta <= r_term.
TrResult TrMinimize(const ProblemSpec& problem, const Vector& x_init, const MeritParams& params,
                    double r_term, const TrustRegionOptions& options, std::uint64_t seed);

void WriteTraceCsv(std::ostream& out, const std::vector<TrTraceRow>& trace);

}  // namespace quantalm
