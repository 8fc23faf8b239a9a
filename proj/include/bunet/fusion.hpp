#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "bunet/unet.hpp"

namespace bunet {

struct FusionExperiment {
  std::size_t sample_count = 1'000'000;
  double sigma = 1.0;
  Fusion method = Fusion::Add;
  std::uint64_t seed = 7;

  /// sample_count >= 1000, sigma >= 0 (0 gives the degenerate case),
  /// method add or concat.
  void validate() const;
};

struct FusionEstimate {
  double variance = 0.0;
  double expected = 0.0;         // 2 sigma^2 for add, sigma^2 for concat
  double standard_error = 0.0;   // of the variance estimate
  std::size_t fused_count = 0;   // n for add, 2n for concat
};

/// Draws two independent N(0, sigma^2) streams of `sample_count` values,
/// fuses them (elementwise sum, or pooling both streams for concat) and
/// returns the unbiased sample variance of the fused stream. Chunks use
/// RNG streams derived from the seed, so the result is independent of the
/// thread count.
FusionEstimate simulate_fusion_variance(const FusionExperiment& experiment);

}  // namespace bunet
