#pragma once

#include <string>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/metrics.hpp"
#include "cmpg/nets.hpp"

namespace cmpg {

// Built-in evaluation suite: every task crossed with a set of traffic
// compositions. Used when the run config supplies no battery of its own.
std::vector<BatteryEntry> default_battery();

// The base scenario with one battery row's overrides applied.
ScenarioConfig scenario_for_entry(const ScenarioConfig& base, const BatteryEntry& entry);

// Runs every battery row under the greedy policy, one log per episode, in a
// fixed order that depends only on the config and seed. `timing` enables the
// per-step decision-latency measurement (off keeps reports byte-stable).
std::vector<EpisodeLog> run_battery(const FullConfig& cfg, Agent& agent, uint64_t seed,
                                    bool timing);

// Restores the trainable parameter vector from a training checkpoint.
void load_agent_params(Agent& agent, const std::string& checkpoint_path);

}  // namespace cmpg
