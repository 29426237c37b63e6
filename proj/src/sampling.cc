#include "quantalm/sampling.hpp"

#include <cmath>
#include <string>

namespace quantalm {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void Validate(const IndependentGaussian& g) {
  if (g.means.size() == 0) throw ConfigError("independent-gaussian: empty mean vector");
  if (g.means.size() != g.variances.size()) {
    throw ConfigError("independent-gaussian: means and variances differ in length");
  }
  for (Index i = 0; i < g.variances.size(); ++i) {
    if (!(g.variances[i] > 0.0) || !std::isfinite(g.variances[i])) {
      throw ConfigError("independent-gaussian: variance " + std::to_string(i) +
                        " must be positive and finite");
    }
    if (!std::isfinite(g.means[i])) throw ConfigError("independent-gaussian: non-finite mean");
  }
}

void Validate(const JointChanceCorrelated& j) {
  if (j.n < 1 || j.m < 1) throw ConfigError("joint-chance-correlated: n and m must be >= 1");
}

RowMatrix DrawGaussian(const IndependentGaussian& g, Index n_samples, std::uint64_t seed) {
  const Index dim = g.means.size();
  const Vector std_devs = g.variances.cwiseSqrt();
  RowMatrix out(n_samples, dim);
  NormalStream normal(seed);
  for (Index s = 0; s < n_samples; ++s) {
    for (Index i = 0; i < dim; ++i) out(s, i) = g.means[i] + std_devs[i] * normal.Next();
  }
  return out;
}

RowMatrix DrawJoint(const JointChanceCorrelated& spec, Index n_samples, std::uint64_t seed) {
  const double scale = std::sqrt(0.5);
  const double m = static_cast<double>(spec.m);
  RowMatrix out(n_samples, spec.n * spec.m);
  Vector common(spec.m);
  NormalStream normal(seed);
  for (Index s = 0; s < n_samples; ++s) {
    for (Index j = 0; j < spec.m; ++j) common[j] = normal.Next();
    for (Index i = 0; i < spec.n; ++i) {
      for (Index j = 0; j < spec.m; ++j) {
        out(s, i * spec.m + j) = static_cast<double>(j + 1) / m + scale * (common[j] + normal.Next());
      }
    }
  }
  return out;
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = SplitMix64(master);
  for (std::uint64_t p : path) h = SplitMix64(h ^ SplitMix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

double NormalStream::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NormalStream::Next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * Uniform() - 1.0;
    v = 2.0 * Uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

IndependentGaussian IndependentGaussian::FromStdDevs(Vector means, const Vector& std_devs) {
  return IndependentGaussian{std::move(means), std_devs.cwiseAbs2()};
}

DistributionSpec::DistributionSpec(Kind kind) : kind_(std::move(kind)) {
  std::visit([](const auto& k) { Validate(k); }, kind_);
}

Index DistributionSpec::dimension() const {
  if (const auto* g = std::get_if<IndependentGaussian>(&kind_)) return g->means.size();
  const auto& j = std::get<JointChanceCorrelated>(kind_);
  return j.n * j.m;
}

SampleBatch::SampleBatch(RowMatrix scenarios, std::uint64_t seed)
    : scenarios_(std::move(scenarios)), columns_(scenarios_), seed_(seed) {
  if (scenarios_.rows() < 1) throw ArgumentError("sample batch must hold at least one scenario");
}

SampleBatch DrawBatch(const DistributionSpec& dist, Index n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ArgumentError("sample size must be >= 1");
  RowMatrix scenarios = std::visit(
      [&](const auto& k) -> RowMatrix {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, IndependentGaussian>) {
          return DrawGaussian(k, n_samples, seed);
        } else {
          return DrawJoint(k, n_samples, seed);
        }
      },
      dist.kind());
  return SampleBatch(std::move(scenarios), seed);
}

SampleBatch DrawJointChanceBatch(Index n, Index m, Index n_samples, std::uint64_t seed) {
  return DrawBatch(DistributionSpec(JointChanceCorrelated{n, m}), n_samples, seed);
}

}  // namespace quantalm
