#pragma once

#include <cstdint>
#include <string>

namespace coxmap {

struct RunConfig {
  std::string subcommand;  // fit | predict | cv | simulate
  std::string pixels_path;
  std::string adjacency_path;
  std::string config_path;
  std::string fit_path;  // predict input
  std::string out_dir;
  std::string preset;  // mod1|mod2|mod2b|mod3, empty for explicit config effects
  std::uint64_t seed = 0;
  bool has_seed = false;
  int threads = 0;  // 0 = all available cores
  std::string estimator = "lognormal-corrected";
  bool force = false;
};

/// Orchestrates a subcommand end to end; throws coxmap::Error on failure.
/// Every file declared for the subcommand is produced, or the call throws.
void run(const RunConfig& config);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace coxmap
