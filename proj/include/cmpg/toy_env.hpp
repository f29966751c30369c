#pragma once

#include <functional>

#include "cmpg/world.hpp"

namespace cmpg {

// 1-D constrained point mass: p' = p + a * dt with a in [-1, 1]. Reward
// tracks a reference point past the constraint boundary, cost is the hinge
// on positions beyond the limit, so the constrained optimum rides the
// boundary. Episodes run a fixed step count (no early termination), starts
// are drawn uniformly from [0, 0.55].
class ToyEnv final : public Env {
 public:
  ToyEnv(const ScenarioConfig& cfg, uint64_t seed);

  int obs_dim() const override { return 1; }
  int stp_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  int max_stps() const override { return 1; }
  std::span<const double> action_low() const override { return cfg_.action_low; }
  std::span<const double> action_high() const override { return cfg_.action_high; }
  const NormTable& norm() const override { return norm_; }

  void reset(uint64_t episode_index) override;
  Observation observe() const override;
  StepResult step(std::span<const double> action) override;

  std::vector<double> model_state() const override { return {p_}; }
  int model_state_dim() const override { return 1; }

  int steps_done() const override { return step_count_; }
  double time() const override { return step_count_ * cfg_.dt; }
  int episode_cap() const override { return cfg_.toy_steps; }

  double position() const { return p_; }
  void set_position(double p) { p_ = p; }  // fixed-start evaluation

 private:
  ScenarioConfig cfg_;
  uint64_t seed_;
  NormTable norm_;
  double p_ = 0.0;
  int step_count_ = 0;
};

// Discounted (J_r, J_c) of an arbitrary policy from fixed start positions,
// the shared evaluation protocol for the oracle and for trained agents.
struct ToyReturns {
  double j_r = 0.0;
  double j_c = 0.0;
};
ToyReturns toy_policy_returns(const ScenarioConfig& cfg, double gamma,
                              std::span<const double> starts,
                              const std::function<double(double)>& policy);

// Default evaluation grid: 21 starts evenly spaced over [0, 0.5].
std::vector<double> toy_eval_starts();

// Independent oracle: dense grid search over clamped linear policies
// a = clamp(k0 + k1 * p, -1, 1), best feasible (j_c <= feas_tol) objective,
// coarse pass then local refinement.
struct ToyOracle {
  double k0 = 0.0, k1 = 0.0;
  double j_r = 0.0, j_c = 0.0;
};
ToyOracle toy_grid_oracle(const ScenarioConfig& cfg, double gamma,
                          std::span<const double> starts, double feas_tol);

}  // namespace cmpg
