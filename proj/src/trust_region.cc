#include "quantalm/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "quantalm/quantile.hpp"

namespace quantalm {

void TrustRegionOptions::Validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(eta1) || !in_unit(eta2) || !in_unit(r0)) {
    throw ConfigError("eta1, eta2 and r0 must lie in (0, 1)");
  }
  if (!in_unit(gamma_dec) || !(gamma_inc > 1.0)) {
    throw ConfigError("trust-region factors need 0 < gamma_dec < 1 < gamma_inc");
  }
  if (!(delta0 > 0.0)) throw ConfigError("initial radius must be positive");
  if (beta_policy == BetaPolicy::kConstant && !(beta > 0.0)) throw ConfigError("beta must be positive");
  if (n_max < 1 || n0 < 1) throw ConfigError("sample sizes must be >= 1");
  if (max_iterations < 1) throw ConfigError("iteration cap must be >= 1");
  if (smoothing_epsilon && !(*smoothing_epsilon > 0.0)) throw ConfigError("smoothing epsilon must be positive");
}

double TrustRegionOptions::BetaFor(double delta) const {
  return beta_policy == BetaPolicy::kConstant ? beta : r0 * delta;
}

Index TrustRegionOptions::SamplesFor(double delta) const {
  if (sample_schedule == SampleSchedule::kFixed) return n_max;
  const double grown = static_cast<double>(n0) * std::ceil(1.0 / (delta * delta));
  return grown >= static_cast<double>(n_max) ? n_max : std::max<Index>(1, static_cast<Index>(grown));
}

double LocalModel::Evaluate(const Vector& step) const {
  return value + gradient.dot(step) + 0.5 * step.dot(hessian * step);
}

SampledMerit::SampledMerit(const ProblemSpec& problem, const SampleBatch& batch, double rho,
                           Vector mu)
    : problem_(problem), batch_(batch), rho_(rho), mu_(std::move(mu)), scratch_(batch.size()) {
  if (mu_.size() != problem_.constraint_count()) {
    throw ConfigError("multiplier count does not match the problem's constraints");
  }
}

double SampledMerit::MeritAt(const Vector& x, double g0) const {
  ConstraintVector g;
  g.g0 = g0;
  if (problem_.n_deterministic > 0) g.g_det = problem_.deterministic(x);
  return MeritValue(problem_.objective(x), g, rho_, mu_);
}

double SampledMerit::Value(const Vector& x) const {
  return MeritAt(x, QuantileOfConstraint(*problem_.chance, x, batch_, problem_.alpha));
}

double SampledMerit::Anchor(const Vector& x) {
  anchor_x_ = x;
  anchor_values_ = EvaluateScenarios(*problem_.chance, x, batch_);
  scratch_ = anchor_values_;
  anchor_quantile_ = EmpiricalQuantileInPlace({scratch_.data(), static_cast<std::size_t>(scratch_.size())},
                                              problem_.alpha);
  return MeritAt(x, anchor_quantile_);
}

ConstraintVector SampledMerit::ShiftedConstraints(Index k, double step) const {
  problem_.chance->EvaluateCoordinateShift(anchor_x_, batch_, anchor_values_, k, step, scratch_);
  CheckFiniteScenarios(scratch_);
  ConstraintVector g;
  g.g0 = ShiftedEmpiricalQuantile({scratch_.data(), static_cast<std::size_t>(scratch_.size())},
                                  {anchor_values_.data(), static_cast<std::size_t>(anchor_values_.size())},
                                  anchor_quantile_, problem_.alpha);
  if (problem_.n_deterministic > 0) {
    Vector x = anchor_x_;
    x[k] += step;
    g.g_det = problem_.deterministic(x);
  }
  return g;
}

double SampledMerit::ShiftedValue(Index k, double step) const {
  Vector x = anchor_x_;
  x[k] += step;
  return MeritValue(problem_.objective(x), ShiftedConstraints(k, step), rho_, mu_);
}

ConstraintVector SampledMerit::Constraints(const Vector& x) const {
  return problem_.Constraints(x, batch_);
}

Vector SampledMerit::Gradient(const Vector& x, double beta, GradientMethod method,
                              std::optional<double> smoothing_epsilon, Matrix* gauss_newton) const {
  const ConstraintVector g = Constraints(x);
  const Vector grad_g0 =
      method == GradientMethod::kFiniteDifference
          ? FdQuantileGradient(*problem_.chance, x, batch_, QuantileQuery{problem_.alpha, beta})
          : SmoothingQuantileGradient(*problem_.chance, x, batch_, problem_.alpha, smoothing_epsilon);
  const Matrix jac = problem_.n_deterministic > 0 ? problem_.deterministic_jacobian(x)
                                                  : Matrix(0, x.size());
  if (gauss_newton) *gauss_newton = MeritGaussNewton(g, grad_g0, jac, rho_, mu_);
  return MeritGradient(problem_.objective_gradient(x), g, grad_g0, jac, rho_, mu_);
}

std::vector<Vector> HessianFitOffsets(Index n, double delta, Index count, std::uint64_t seed) {
  std::vector<Vector> offsets;
  offsets.reserve(static_cast<std::size_t>(count));
  for (Index j = 0; j < std::min(count, 2 * n); ++j) {
    offsets.push_back(Vector::Unit(n, j / 2) * (j % 2 == 0 ? delta : -delta));
  }
  if (static_cast<Index>(offsets.size()) < count) {
    offsets.push_back(Vector::Constant(n, delta / std::sqrt(static_cast<double>(n))));
  }
  NormalStream normal(seed);
  while (static_cast<Index>(offsets.size()) < count) {
    Vector d(n);
    for (Index i = 0; i < n; ++i) d[i] = normal.Next();
    offsets.push_back(d * (delta / d.norm()));
  }
  return offsets;
}

std::optional<Matrix> FitHessian(const std::vector<Vector>& offsets, const Vector& residuals) {
  if (offsets.empty()) return std::nullopt;
  const Index p = static_cast<Index>(offsets.size());
  const Index n = offsets.front().size();
  // Unit directions; the equation s^T H s / 2 = r becomes u^T H u / 2 = r / |s|^2.
  Matrix units(n, p);
  Vector rhs(p);
  for (Index j = 0; j < p; ++j) {
    const double len = offsets[static_cast<std::size_t>(j)].norm();
    if (!(len > 0.0)) return std::nullopt;
    units.col(j) = offsets[static_cast<std::size_t>(j)] / len;
    rhs[j] = residuals[j] / (len * len);
  }
  // Gram matrix of the maps H -> u_j^T H u_j / 2 under the Frobenius inner product.
  const Matrix inner = units.transpose() * units;
  const Matrix gram = 0.25 * inner.cwiseAbs2();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
  cod.setThreshold(1e-10);
  if (cod.rank() == 0) return std::nullopt;
  const Vector lambda = cod.solve(rhs);
  if (!lambda.allFinite()) return std::nullopt;
  Matrix h = 0.5 * units * lambda.asDiagonal() * units.transpose();
  h = 0.5 * (h + h.transpose()).eval();
  if (!h.allFinite()) return std::nullopt;
  return h;
}

LocalModel BuildLocalModel(const ProblemSpec& problem, const Vector& x0, const SampleBatch& batch,
                           const MeritParams& params, double delta, double beta,
                           const TrustRegionOptions& options) {
  SampledMerit merit(problem, batch, params.rho, params.mu_bar);
  const Index n = x0.size();

  LocalModel model;
  model.x0 = x0;
  model.value = merit.Anchor(x0);
  const bool structured = options.hessian_model == HessianModel::kStructured;
  Matrix known = Matrix::Zero(n, n);
  model.gradient = merit.Gradient(x0, beta, options.gradient_method, options.smoothing_epsilon,
                                  structured ? &known : nullptr);
  model.hessian = known;
  if (!options.fit_hessian) return model;

  // Fitted function: Phi_N, or under kStructured Phi_N with the penalty of
  // each deterministic constraint replaced by its multiplier term, frozen at
  // x0. Both have gradient model.gradient at x0.
  const ConstraintVector g_x0 = merit.Constraints(x0);
  Vector lambda(g_x0.size());
  for (Index i = 0; i < g_x0.size(); ++i) {
    lambda[i] = params.rho * std::max(0.0, g_x0[i] + params.mu_bar[i] / params.rho);
  }
  auto fitted = [&](const Vector& x, const ConstraintVector& g) {
    if (!structured) return MeritValue(problem.objective(x), g, params.rho, params.mu_bar);
    const double shifted = std::max(0.0, g.g0 + params.mu_bar[0] / params.rho);
    double v = problem.objective(x) + 0.5 * params.rho * shifted * shifted;
    for (Index i = 0; i < g.g_det.size(); ++i) v += lambda[i + 1] * g.g_det[i];
    return v;
  };
  const double center = fitted(x0, g_x0);
  // Part of the known Hessian that `fitted` still contains: the chance
  // constraint's Gauss-Newton term.
  Matrix known_in_fit = known;
  if (structured && problem.n_deterministic > 0) {
    known_in_fit -= MeritGaussNewton(g_x0, Vector::Zero(n), problem.deterministic_jacobian(x0), params.rho,
                                     params.mu_bar);
  }

  const Index count = options.fit_points > 0 ? options.fit_points
                                             : std::min((n + 1) * (n + 2) / 2, 2 * n + 1);
  const std::vector<Vector> offsets = HessianFitOffsets(n, delta, count, batch.seed());
  Vector residuals(count);
  for (Index j = 0; j < count; ++j) {
    const Vector& s = offsets[static_cast<std::size_t>(j)];
    const Vector x = x0 + s;
    const double value = fitted(x, j < 2 * n ? merit.ShiftedConstraints(j / 2, s[j / 2]) : merit.Constraints(x));
    residuals[j] = value - center - model.gradient.dot(s) - 0.5 * s.dot(known_in_fit * s);
  }
  if (auto h = FitHessian(offsets, residuals)) model.hessian += *h;
  return model;
}

namespace {

// Unit direction of (approximately) most negative curvature of a symmetric
// h, found by power iteration on ||h||_F I - h from the coordinate axis
// with the smallest diagonal entry. Empty when no direction tried has
// negative curvature.
std::optional<Vector> NegativeCurvatureDirection(const Matrix& h) {
  const Index n = h.rows();
  Index k_min = 0;
  const double d_min = h.diagonal().minCoeff(&k_min);
  const double shift = h.norm();
  Vector v = Vector::Unit(n, k_min);
  Vector best = v;
  double best_curvature = d_min;
  for (int it = 0; it < 50; ++it) {
    Vector w = shift * v - h * v;
    const double w_norm = w.norm();
    if (!(w_norm > 0.0) || !w.allFinite()) break;
    v = w / w_norm;
    const double curvature = v.dot(h * v);
    if (curvature < best_curvature) {
      best_curvature = curvature;
      best = v;
    }
  }
  if (!(best_curvature < 0.0)) return std::nullopt;
  return best;
}

// Exact minimizer of g^T s + s^T h s / 2 over ||s|| <= delta in R^1 or R^2.
Eigen::Vector2d SolveSmallTrs(const Eigen::Vector2d& g, const Eigen::Matrix2d& h, double delta, bool planar) {
  auto value = [&](const Eigen::Vector2d& s) { return g.dot(s) + 0.5 * s.dot(h * s); };
  Eigen::Vector2d best = Eigen::Vector2d::Zero();
  double best_value = 0.0;
  auto consider = [&](const Eigen::Vector2d& s) {
    const double v = value(s);
    if (v < best_value) {
      best_value = v;
      best = s;
    }
  };
  if (!planar) {
    const double a = h(0, 0);
    if (a > 0.0) consider(Eigen::Vector2d(std::clamp(-g[0] / a, -delta, delta), 0.0));
    consider(Eigen::Vector2d(delta, 0.0));
    consider(Eigen::Vector2d(-delta, 0.0));
    return best;
  }
  Eigen::LLT<Eigen::Matrix2d> llt(h);
  if (llt.info() == Eigen::Success) {
    const Eigen::Vector2d interior = -llt.solve(g);
    if (interior.allFinite() && interior.norm() <= delta) consider(interior);
  }
  auto boundary = [&](double theta) { return Eigen::Vector2d(delta * std::cos(theta), delta * std::sin(theta)); };
  constexpr int kAngles = 360;
  const double h_theta = 2.0 * M_PI / kAngles;
  int i_best = 0;
  double v_best = value(boundary(0.0));
  for (int i = 1; i < kAngles; ++i) {
    const double v = value(boundary(h_theta * i));
    if (v < v_best) {
      v_best = v;
      i_best = i;
    }
  }
  // Golden section on the bracketing arc.
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = h_theta * (i_best - 1), hi = h_theta * (i_best + 1);
  double c = hi - ratio * (hi - lo), d = lo + ratio * (hi - lo);
  double fc = value(boundary(c)), fd = value(boundary(d));
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      hi = d, d = c, fd = fc;
      c = hi - ratio * (hi - lo);
      fc = value(boundary(c));
    } else {
      lo = c, c = d, fc = fd;
      d = lo + ratio * (hi - lo);
      fd = value(boundary(d));
    }
  }
  consider(boundary(0.5 * (lo + hi)));
  consider(boundary(h_theta * i_best));
  return best;
}

}  // namespace

Vector SolveTrSubproblem(const LocalModel& model, double delta) {
  const Vector& g = model.gradient;
  const Matrix& h = model.hessian;
  const Index n = g.size();
  const double g_norm = g.norm();

  // Second direction: the Newton step when h is positive definite, else a
  // direction of negative curvature.
  std::optional<Vector> second;
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() == Eigen::Success) {
    if (g_norm == 0.0) return Vector::Zero(n);
    const Vector newton = -llt.solve(g);
    if (newton.allFinite() && newton.norm() <= delta) return newton;
    if (newton.allFinite()) second = newton;
  } else {
    second = NegativeCurvatureDirection(h);
  }

  Matrix basis(n, 2);
  Index dims = 0;
  if (g_norm > 0.0) basis.col(dims++) = g / g_norm;
  if (second) {
    Vector v = *second;
    if (dims == 1) v -= basis.col(0).dot(v) * basis.col(0);
    const double v_norm = v.norm();
    if (v_norm > 1e-10 * second->norm()) basis.col(dims++) = v / v_norm;
  }
  if (dims == 0) return Vector::Zero(n);

  const Matrix q = basis.leftCols(dims);
  Eigen::Vector2d g2 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d h2 = Eigen::Matrix2d::Identity();
  g2.head(dims) = q.transpose() * g;
  h2.topLeftCorner(dims, dims) = q.transpose() * h * q;
  const Eigen::Vector2d s2 = SolveSmallTrs(g2, h2, delta, dims == 2);
  return q * s2.head(dims);
}

double CauchyDecreaseBound(const LocalModel& model, double delta) {
  const double g_norm = model.gradient.norm();
  double h_norm = 0.0;
  if (model.hessian.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(model.hessian, Eigen::EigenvaluesOnly);
    h_norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  }
  return 0.5 * g_norm * std::min(delta, g_norm / (1.0 + h_norm));
}

TrResult TrMinimize(const ProblemSpec& problem, const Vector& x_init, const MeritParams& params,
                    double r_term, const TrustRegionOptions& options, std::uint64_t seed) {
  options.Validate();
  params.Validate();
  if (!(r_term > 0.0 && r_term < options.delta0)) {
    throw ConfigError("termination radius must lie in (0, delta0)");
  }
  if (x_init.size() != problem.n || !x_init.allFinite()) throw ConfigError("bad initial point");

  TrResult result;
  result.x = x_init;
  double delta = options.delta0;
  std::optional<SampleBatch> shared;
  if (!options.resample_each_iteration) shared.emplace(DrawBatch(problem.dist, options.n_max, seed));
  for (int k = 0; k < options.max_iterations; ++k) {
    const Index n_samples = options.SamplesFor(delta);
    const SampleBatch batch =
        shared ? (n_samples == shared->size()
                      ? *shared
                      : SampleBatch(shared->scenarios().topRows(n_samples), shared->seed()))
               : DrawBatch(problem.dist, n_samples, DeriveSeed(seed, {static_cast<std::uint64_t>(k)}));
    const LocalModel model =
        BuildLocalModel(problem, result.x, batch, params, delta, options.BetaFor(delta), options);
    const Vector step = SolveTrSubproblem(model, delta);
    const double decrease = model.Decrease(step);
    if (options.check_cauchy_decrease &&
        decrease < CauchyDecreaseBound(model, delta) * (1.0 - 1e-9) - 1e-14) {
      throw std::logic_error("trust-region step violates the Cauchy decrease contract");
    }

    TrTraceRow row;
    row.iteration = k;
    row.delta = delta;
    row.samples = n_samples;
    row.model_decrease = decrease;
    row.ratio = std::numeric_limits<double>::quiet_NaN();
    row.merit = model.value;
    row.gradient_norm = model.gradient.norm();

    if (decrease >= options.eta1 * std::min(delta, delta * delta)) {
      SampledMerit merit(problem, batch, params.rho, params.mu_bar);
      const Vector trial = result.x + step;
      row.ratio = (model.value - merit.Value(trial)) / decrease;
      row.accepted = row.ratio >= options.eta2;
    }
    if (row.accepted) {
      result.x += step;
      delta *= options.gamma_inc;
    } else {
      delta *= options.gamma_dec;
    }
    result.trace.push_back(row);
    if (delta <= r_term) {
      result.delta = delta;
      return result;
    }
  }
  result.delta = delta;
  result.truncated = true;
  return result;
}

void WriteTraceCsv(std::ostream& out, const std::vector<TrTraceRow>& trace) {
  out << "iter,delta,model_decrease,ratio,accepted,phi_n,grad_norm\n";
  out << std::setprecision(17);
  for (const TrTraceRow& r : trace) {
    out << r.iteration << ',' << r.delta << ',' << r.model_decrease << ',';
    if (std::isnan(r.ratio)) {
      out << "nan";
    } else {
      out << r.ratio;
    }
    out << ',' << (r.accepted ? 1 : 0) << ',' << r.merit << ',' << r.gradient_norm << '\n';
  }
}

}  // namespace quantalm
