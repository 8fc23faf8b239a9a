#include "bunet/fusion.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "bunet/errors.hpp"
#include "bunet/parallel.hpp"

namespace bunet {

void FusionExperiment::validate() const {
  if (sample_count < 1000) throw ConfigError("fusion experiment needs at least 1000 samples");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be a finite non-negative value");
  if (method == Fusion::None) throw ConfigError("fusion method must be add or concat");
}

namespace {

constexpr std::size_t kChunk = 1 << 16;

// Chan et al. pairwise combination of (count, mean, M2) accumulators.
struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  double m4_sum = 0.0;  // sum of y^4, for the standard error (zero-mean data)

  void push(double y) {
    count += 1.0;
    const double d = y - mean;
    mean += d / count;
    m2 += d * (y - mean);
    m4_sum += y * y * y * y;
  }
  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    const double d = o.mean - mean;
    m2 += o.m2 + d * d * count * o.count / total;
    mean += d * o.count / total;
    m4_sum += o.m4_sum;
    count = total;
  }
};

}  // namespace

FusionEstimate simulate_fusion_variance(const FusionExperiment& exp) {
  exp.validate();
  const std::size_t chunks = (exp.sample_count + kChunk - 1) / kChunk;
  std::vector<Moments> partial(chunks);

#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::size_t c = 0; c < chunks; ++c) {
    std::seed_seq seq{static_cast<std::uint32_t>(exp.seed), static_cast<std::uint32_t>(exp.seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(exp.sample_count, begin + kChunk);
    Moments m;
    for (std::size_t i = begin; i < end; ++i) {
      const double x1 = exp.sigma * normal(rng);
      const double x2 = exp.sigma * normal(rng);
      if (exp.method == Fusion::Add) {
        m.push(x1 + x2);
      } else {
        m.push(x1);
        m.push(x2);
      }
    }
    partial[c] = m;
  }

  Moments total;
  for (const auto& m : partial) total.merge(m);
  FusionEstimate est;
  est.fused_count = static_cast<std::size_t>(total.count);
  est.variance = total.count > 1.0 ? total.m2 / (total.count - 1.0) : 0.0;
  const double s2 = exp.sigma * exp.sigma;
  est.expected = exp.method == Fusion::Add ? 2.0 * s2 : s2;
  // Var(s^2) ~ (mu4 - sigma^4) / n
  const double mu4 = total.m4_sum / total.count;
  est.standard_error = std::sqrt(std::max(0.0, mu4 - est.variance * est.variance) / total.count);
  return est;
}

}  // namespace bunet
