#pragma once

#include <functional>
#include <optional>
#include <span>

#include "quantalm/common.hpp"
#include "quantalm/sampling.hpp"

namespace quantalm {

struct QuantileQuery {
  double alpha = 0.05;  // risk level, (0, 1)
  double beta = 1e-3;   // central-difference half step, > 0

  void Validate() const;
};

// 1-based rank ceil((1 - alpha) n) of the order statistic used as the
// empirical (1 - alpha)-quantile, clamped to [1, n].
std::size_t QuantileRank(std::size_t n, double alpha);

// Plain order statistic, no interpolation. Throws ArgumentError on empty
// input or alpha outside (0, 1).
double EmpiricalQuantile(std::span<const double> values, double alpha);

// Same, but partially reorders `values` instead of copying.
double EmpiricalQuantileInPlace(std::span<double> values, double alpha);

// Empirical quantile of `shifted` given `base_quantile`, the one of `base`
// (same size, same alpha). Order statistics move by at most
// max_s |shifted_s - base_s|, so only values within that band of
// base_quantile are selected among. Exact for finite inputs; overwrites
// `shifted`. Throws ArgumentError if base_quantile is inconsistent.
double ShiftedEmpiricalQuantile(std::span<double> shifted, std::span<const double> base,
                                double base_quantile, double alpha);

// The random constraint c1(x, xi). Implementations must be deterministic
// in (x, scenario).
class ScenarioConstraint {
 public:
  virtual ~ScenarioConstraint() = default;

  virtual double Value(const Vector& x, std::span<const double> scenario) const = 0;

  virtual bool HasScenarioGradient() const { return false; }
  // d/dx c1(x, scenario). Only called when HasScenarioGradient().
  virtual Vector ScenarioGradient(const Vector& x, std::span<const double> scenario) const;

  // sum_s weights_s d/dx c1(x, xi_s). The default loops over the nonzero
  // weights calling ScenarioGradient.
  virtual Vector WeightedScenarioGradient(const Vector& x, const SampleBatch& batch,
                                          const Vector& weights) const;

  // c1(x, xi_s) for every scenario of the batch.
  virtual void EvaluateBatch(const Vector& x, const SampleBatch& batch,
                             Eigen::Ref<Vector> out) const;

  // c1(x + step e_k, xi_s) given base = c1(x, xi_s). The default ignores
  // `base` and re-evaluates; structured constraints override it.
  virtual void EvaluateCoordinateShift(const Vector& x, const SampleBatch& batch,
                                       const Vector& base, Index k, double step,
                                       Eigen::Ref<Vector> out) const;
};

// Adapter over plain callables, mostly for tests and small problems.
class FunctionConstraint final : public ScenarioConstraint {
 public:
  using ValueFn = std::function<double(const Vector&, std::span<const double>)>;
  using GradientFn = std::function<Vector(const Vector&, std::span<const double>)>;

  explicit FunctionConstraint(ValueFn value, GradientFn gradient = {})
      : value_(std::move(value)), gradient_(std::move(gradient)) {}

  double Value(const Vector& x, std::span<const double> scenario) const override {
    return value_(x, scenario);
  }
  bool HasScenarioGradient() const override { return static_cast<bool>(gradient_); }
  Vector ScenarioGradient(const Vector& x, std::span<const double> scenario) const override;

 private:
  ValueFn value_;
  GradientFn gradient_;
};

// Throws EvaluationError naming the first non-finite scenario value.
void CheckFiniteScenarios(const Vector& values);

// Evaluates c1 over the batch; throws EvaluationError naming the first
// scenario with a non-finite value.
Vector EvaluateScenarios(const ScenarioConstraint& c1, const Vector& x, const SampleBatch& batch);

double QuantileOfConstraint(const ScenarioConstraint& c1, const Vector& x,
                            const SampleBatch& batch, double alpha);

// Central differences of the empirical quantile along every coordinate.
// All 2n evaluations share `batch` (common random numbers).
Vector FdQuantileGradient(const ScenarioConstraint& c1, const Vector& x,
                          const SampleBatch& batch, const QuantileQuery& query);

// Quintic smoothing of the step function 1{y <= 0}, with support (-eps, eps).
double SmoothingPolynomial(double y, double epsilon);
double SmoothingStep(double y, double epsilon);
double SmoothingStepDerivative(double y, double epsilon);

// 0.1 times the interquartile range of `values`.
double DefaultBandwidth(std::span<const double> values);

// Kernel-weighted average of scenario gradients around the empirical
// quantile. Uses DefaultBandwidth when `epsilon` is empty, or 0.1 times
// the range of the values when the interquartile range is zero. Throws
// DegenerateBandwidthError when no scenario falls inside the kernel window
// and ConfigError when c1 has no scenario gradient.
Vector SmoothingQuantileGradient(const ScenarioConstraint& c1, const Vector& x,
                                 const SampleBatch& batch, double alpha,
                                 std::optional<double> epsilon = std::nullopt);

}  // namespace quantalm
