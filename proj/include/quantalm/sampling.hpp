#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <variant>

#include "quantalm/common.hpp"

namespace quantalm {

// Mixes a master seed with a path of stream identifiers (outer iteration,
// inner iteration, purpose, ...) into an independent 64-bit sub-seed.
// splitmix64 finalizer applied per path element.
std::uint64_t DeriveSeed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// Standard normal variates by the Marsaglia polar method on top of
// mt19937_64. Both pieces are fully specified, so streams are identical
// across standard library implementations.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double Uniform();  // in [0, 1)
  double Next();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct IndependentGaussian {
  Vector means;
  Vector variances;

  static IndependentGaussian FromStdDevs(Vector means, const Vector& std_devs);
};

// xi_ij = j/m + sqrt(0.5) (W_j + V_ij): unit variance, covariance 0.5
// within a column j, zero across columns. Scenario rows store xi_ij at
// i * m + (j - 1).
struct JointChanceCorrelated {
  Index n = 1;
  Index m = 1;
};

class DistributionSpec {
 public:
  using Kind = std::variant<IndependentGaussian, JointChanceCorrelated>;

  // Throws ConfigError on non-positive variances, mismatched sizes or
  // empty shapes.
  explicit DistributionSpec(Kind kind);

  const Kind& kind() const { return kind_; }
  Index dimension() const;

 private:
  Kind kind_;
};

// N i.i.d. scenarios, one per row, tagged with the seed that produced them.
class SampleBatch {
 public:
  SampleBatch(RowMatrix scenarios, std::uint64_t seed);

  Index size() const { return scenarios_.rows(); }
  Index scenario_dimension() const { return scenarios_.cols(); }
  std::uint64_t seed() const { return seed_; }

  const RowMatrix& scenarios() const { return scenarios_; }
  // Column-major copy, for contiguous access to one scenario coordinate.
  const Matrix& columns() const { return columns_; }
  std::span<const double> scenario(Index i) const {
    return {scenarios_.data() + i * scenarios_.cols(), static_cast<std::size_t>(scenarios_.cols())};
  }

 private:
  RowMatrix scenarios_;
  Matrix columns_;
  std::uint64_t seed_;
};

// Deterministic in (dist, n_samples, seed). Throws ArgumentError if
// n_samples < 1.
SampleBatch DrawBatch(const DistributionSpec& dist, Index n_samples, std::uint64_t seed);

SampleBatch DrawJointChanceBatch(Index n, Index m, Index n_samples, std::uint64_t seed);

}  // namespace quantalm
