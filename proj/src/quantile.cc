#include "quantalm/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace quantalm {
namespace {

void CheckAlpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("risk level alpha must lie in (0, 1)");
}

}  // namespace

void QuantileQuery::Validate() const {
  CheckAlpha(alpha);
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("finite-difference step beta must be > 0");
}

std::size_t QuantileRank(std::size_t n, double alpha) {
  CheckAlpha(alpha);
  const double target = (1.0 - alpha) * static_cast<double>(n);
  // (1 - 0.1) * 10 is 9.000000000000002 in binary; strip representation
  // noise before taking the ceiling.
  const double rank = std::ceil(target - 1e-9 * std::max(1.0, target));
  return std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, n);
}

double EmpiricalQuantileInPlace(std::span<double> values, double alpha) {
  if (values.empty()) throw ArgumentError("empirical quantile of an empty sample");
  const std::size_t k = QuantileRank(values.size(), alpha) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

double ShiftedEmpiricalQuantile(std::span<double> shifted, std::span<const double> base,
                                double base_quantile, double alpha) {
  if (shifted.size() != base.size()) throw ArgumentError("shifted and base samples differ in size");
  if (shifted.empty()) throw ArgumentError("empirical quantile of an empty sample");
  const std::size_t n = shifted.size();
  const std::size_t k = QuantileRank(n, alpha) - 1;
  const Eigen::Map<const Vector> now(shifted.data(), static_cast<Index>(n));
  const Eigen::Map<const Vector> before(base.data(), static_cast<Index>(n));
  const double radius = (now - before).cwiseAbs().maxCoeff();
  // Pad for rounding in the band edges.
  const double pad = 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(base_quantile) + radius);
  const double lo = base_quantile - radius - pad, hi = base_quantile + radius + pad;

  // Branch-free compaction of the band to the front.
  std::size_t below = 0, band = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double v = shifted[s];
    shifted[band] = v;
    below += static_cast<std::size_t>(v < lo);
    band += static_cast<std::size_t>((v >= lo) & (v <= hi));
  }
  if (k < below || k >= below + band) {
    throw ArgumentError("base_quantile is not the empirical quantile of base");
  }
  const auto first = shifted.begin();
  std::nth_element(first, first + static_cast<std::ptrdiff_t>(k - below), first + static_cast<std::ptrdiff_t>(band));
  return shifted[k - below];
}

double EmpiricalQuantile(std::span<const double> values, double alpha) {
  std::vector<double> copy(values.begin(), values.end());
  return EmpiricalQuantileInPlace(copy, alpha);
}

Vector ScenarioConstraint::ScenarioGradient(const Vector&, std::span<const double>) const {
  throw ConfigError("constraint does not provide scenario gradients");
}

Vector ScenarioConstraint::WeightedScenarioGradient(const Vector& x, const SampleBatch& batch,
                                                    const Vector& weights) const {
  Vector grad = Vector::Zero(x.size());
  for (Index s = 0; s < batch.size(); ++s) {
    if (weights[s] != 0.0) grad += weights[s] * ScenarioGradient(x, batch.scenario(s));
  }
  return grad;
}

void ScenarioConstraint::EvaluateBatch(const Vector& x, const SampleBatch& batch,
                                       Eigen::Ref<Vector> out) const {
  for (Index s = 0; s < batch.size(); ++s) out[s] = Value(x, batch.scenario(s));
}

void ScenarioConstraint::EvaluateCoordinateShift(const Vector& x, const SampleBatch& batch,
                                                 const Vector& /*base*/, Index k, double step,
                                                 Eigen::Ref<Vector> out) const {
  Vector shifted = x;
  shifted[k] += step;
  EvaluateBatch(shifted, batch, out);
}

Vector FunctionConstraint::ScenarioGradient(const Vector& x,
                                            std::span<const double> scenario) const {
  if (!gradient_) return ScenarioConstraint::ScenarioGradient(x, scenario);
  return gradient_(x, scenario);
}

void CheckFiniteScenarios(const Vector& values) {
  if (values.allFinite()) return;
  for (Index s = 0; s < values.size(); ++s) {
    if (!std::isfinite(values[s])) {
      throw EvaluationError("non-finite constraint value at scenario " + std::to_string(s),
                            static_cast<std::size_t>(s));
    }
  }
}

Vector EvaluateScenarios(const ScenarioConstraint& c1, const Vector& x, const SampleBatch& batch) {
  Vector values(batch.size());
  c1.EvaluateBatch(x, batch, values);
  CheckFiniteScenarios(values);
  return values;
}

double QuantileOfConstraint(const ScenarioConstraint& c1, const Vector& x,
                            const SampleBatch& batch, double alpha) {
  CheckAlpha(alpha);
  Vector values = EvaluateScenarios(c1, x, batch);
  return EmpiricalQuantileInPlace({values.data(), static_cast<std::size_t>(values.size())}, alpha);
}

Vector FdQuantileGradient(const ScenarioConstraint& c1, const Vector& x,
                          const SampleBatch& batch, const QuantileQuery& query) {
  query.Validate();
  const Vector base = EvaluateScenarios(c1, x, batch);
  const std::span<const double> base_view{base.data(), static_cast<std::size_t>(base.size())};
  const double base_quantile = EmpiricalQuantile(base_view, query.alpha);
  Vector shifted(batch.size());
  const std::span<double> view{shifted.data(), static_cast<std::size_t>(shifted.size())};

  auto shifted_quantile = [&](Index k, double step) {
    c1.EvaluateCoordinateShift(x, batch, base, k, step, shifted);
    CheckFiniteScenarios(shifted);
    return ShiftedEmpiricalQuantile(view, base_view, base_quantile, query.alpha);
  };

  Vector grad(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    const double forward = shifted_quantile(k, query.beta);
    const double backward = shifted_quantile(k, -query.beta);
    grad[k] = (forward - backward) / (2.0 * query.beta);
  }
  return grad;
}

double SmoothingPolynomial(double y, double epsilon) {
  const double u = y / epsilon;
  const double u3 = u * u * u;
  return 15.0 / 16.0 * (-0.2 * u3 * u * u + 2.0 / 3.0 * u3 - u + 8.0 / 15.0);
}

double SmoothingStep(double y, double epsilon) {
  if (y <= -epsilon) return 1.0;
  if (y >= epsilon) return 0.0;
  return SmoothingPolynomial(y, epsilon);
}

double SmoothingStepDerivative(double y, double epsilon) {
  if (y <= -epsilon || y >= epsilon) return 0.0;
  const double u = y / epsilon;
  const double w = 1.0 - u * u;
  return -15.0 / (16.0 * epsilon) * w * w;
}

double DefaultBandwidth(std::span<const double> values) {
  std::vector<double> copy(values.begin(), values.end());
  const double upper = EmpiricalQuantileInPlace(copy, 0.25);
  const double lower = EmpiricalQuantileInPlace(copy, 0.75);
  return 0.1 * (upper - lower);
}

Vector SmoothingQuantileGradient(const ScenarioConstraint& c1, const Vector& x,
                                 const SampleBatch& batch, double alpha,
                                 std::optional<double> epsilon) {
  CheckAlpha(alpha);
  if (!c1.HasScenarioGradient()) {
    throw ConfigError("smoothing gradient requires scenario gradients of the constraint");
  }
  const Vector values = EvaluateScenarios(c1, x, batch);
  const std::span<const double> view{values.data(), static_cast<std::size_t>(values.size())};
  double eps = epsilon ? *epsilon : DefaultBandwidth(view);
  if (!epsilon && !(eps > 0.0)) {
    // Tied middle half. With every value tied any window weights them all
    // equally, so the scale is arbitrary.
    const auto [lo, hi] = std::minmax_element(view.begin(), view.end());
    eps = *hi > *lo ? 0.1 * (*hi - *lo) : 1.0;
  }
  if (!(eps > 0.0)) {
    throw DegenerateBandwidthError("smoothing bandwidth is not positive; pass a larger epsilon");
  }
  const double q = EmpiricalQuantile(view, alpha);

  Vector weights(values.size());
  for (Index s = 0; s < values.size(); ++s) {
    weights[s] = std::max(0.0, -SmoothingStepDerivative(values[s] - q, eps));
  }
  const double total = weights.sum();
  if (!(total > 0.0)) {
    throw DegenerateBandwidthError("no scenario within epsilon of the empirical quantile; "
                                   "increase the smoothing bandwidth");
  }
  if (!std::isfinite(total)) {
    throw DegenerateBandwidthError("smoothing bandwidth too small, kernel weights overflow");
  }
  return c1.WeightedScenarioGradient(x, batch, weights) / total;
}

}  // namespace quantalm
