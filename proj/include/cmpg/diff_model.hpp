#pragma once

#include <memory>
#include <span>
#include <vector>

#include "cmpg/tape.hpp"
#include "cmpg/world.hpp"

namespace cmpg {

// One differentiable N-step rollout, opened from a model-state snapshot.
// observe() returns the raw-unit observation at the current rollout step;
// step() advances by one step under an on-tape action (already inside the
// action bounds; the model does not clamp) and returns (reward, cost).
class ModelRollout {
 public:
  struct ObsVars {
    ad::Var x;
    std::vector<ad::Var> members;
  };

  virtual ~ModelRollout() = default;
  virtual ObsVars observe(ad::Tape& t) = 0;
  virtual std::pair<ad::Var, ad::Var> step(ad::Tape& t, ad::Var action) = 0;
};

// Analytic differentiable mirror of an Env: ego kinematics on tape, STP
// constant-speed/yaw-rate prediction precomputed as constants, frozen
// traffic light.
class DiffModel {
 public:
  virtual ~DiffModel() = default;
  virtual std::unique_ptr<ModelRollout> begin(ad::Tape& t, std::span<const double> model_state,
                                              int horizon) const = 0;
};

std::unique_ptr<DiffModel> make_intersection_model(const ScenarioConfig& cfg, int max_stps);
std::unique_ptr<DiffModel> make_toy_model(const ScenarioConfig& cfg);

// Factory pair so the trainer can stay env-agnostic.
std::unique_ptr<Env> make_env(const ScenarioConfig& cfg, int max_stps, uint64_t seed);
std::unique_ptr<DiffModel> make_model(const ScenarioConfig& cfg, int max_stps);

}  // namespace cmpg
