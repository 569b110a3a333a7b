#pragma once

#include <cstdint>

namespace coxmap {

/// Counter-based generator (SplitMix64 in counter mode). Each draw is a pure
/// function of (key, counter), so replicates and parallel schedules that
/// partition the counter space reproduce bit-identically.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Derive an independent substream (e.g. one per pixel or per replicate).
  CounterRng stream(std::uint64_t substream) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via inverse-CDF (Wichura AS 241, double precision).
  double normal();
  /// Poisson draw by CDF inversion, chunked for large means.
  long poisson(double lambda);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Inverse of the standard normal CDF; p in (0, 1).
double normal_quantile(double p);

}  // namespace coxmap
