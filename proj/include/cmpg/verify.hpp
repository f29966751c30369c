#pragma once

#include <string>

#include "cmpg/config.hpp"

namespace cmpg {

struct VerifyResult {
  bool pass = false;
  int checks = 0;
  int failures = 0;
  double max_rel_nets = 0.0;  // worst data-path / critic gradient error
  double max_rel_bptt = 0.0;  // worst rollout-gradient error
  double wall_s = 0.0;
  std::string report;  // one line per check group
};

// Self-verification against independent oracles. `suite` selects
// "gradients" (central finite differences over policy, encoder, critic, and
// N-step rollout paths), "injectivity" (exhaustive set-mapping
// certification plus the pooling construction identity), or "all".
// `points` is the finite-difference probe budget across the gradient paths.
VerifyResult run_verify(const FullConfig& cfg, const std::string& suite, uint64_t seed,
                        int points);

}  // namespace cmpg
