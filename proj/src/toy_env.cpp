#include "cmpg/toy_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmpg/errors.hpp"

namespace cmpg {

ToyEnv::ToyEnv(const ScenarioConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  if (cfg_.kind != "toy") throw ConfigError("ToyEnv: scenario kind is '" + cfg_.kind + "'");
  if (cfg_.action_low.size() != 1 || cfg_.action_high.size() != 1)
    throw ConfigError("ToyEnv: expected 1 action dimension (set scenario.action_low/high)");
  norm_ = toy_norm_table(cfg_);
  reset(0);
}

void ToyEnv::reset(uint64_t episode_index) {
  Rng rng = Rng::stream(seed_, episode_index);
  p_ = rng.uniform(0.0, 0.55);
  step_count_ = 0;
}

Observation ToyEnv::observe() const {
  Observation o;
  o.x = {p_};
  return o;
}

StepResult ToyEnv::step(std::span<const double> action) {
  if (action.size() != 1) throw UsageError("ToyEnv::step: expected 1 action value");
  if (!std::isfinite(action[0])) throw UsageError("ToyEnv::step: non-finite action");
  StepResult out;
  const double a = std::clamp(action[0], cfg_.action_low[0], cfg_.action_high[0]);
  out.clamped = a != action[0];
  p_ += a * cfg_.dt;
  ++step_count_;
  out.r = -(p_ - cfg_.toy_p_ref) * (p_ - cfg_.toy_p_ref);
  out.c = std::max(0.0, p_ - cfg_.toy_limit);
  out.d = out.c > 0.0 ? 1 : 0;
  out.done = step_count_ >= cfg_.toy_steps;
  out.obs = observe();
  return out;
}

ToyReturns toy_policy_returns(const ScenarioConfig& cfg, double gamma,
                              std::span<const double> starts,
                              const std::function<double(double)>& policy) {
  if (starts.empty()) throw UsageError("toy_policy_returns: no start positions");
  ToyReturns sum;
  for (double p0 : starts) {
    double p = p0;
    double disc = 1.0;
    for (int t = 0; t < cfg.toy_steps; ++t) {
      const double a = std::clamp(policy(p), cfg.action_low[0], cfg.action_high[0]);
      p += a * cfg.dt;
      sum.j_r += disc * -(p - cfg.toy_p_ref) * (p - cfg.toy_p_ref);
      sum.j_c += disc * std::max(0.0, p - cfg.toy_limit);
      disc *= gamma;
    }
  }
  sum.j_r /= double(starts.size());
  sum.j_c /= double(starts.size());
  return sum;
}

std::vector<double> toy_eval_starts() {
  std::vector<double> starts(21, 0.0);
  for (int i = 0; i < 21; ++i) starts[size_t(i)] = 0.5 * double(i) / 20.0;
  return starts;
}

ToyOracle toy_grid_oracle(const ScenarioConfig& cfg, double gamma,
                          std::span<const double> starts, double feas_tol) {
  ToyOracle best;
  best.j_r = -std::numeric_limits<double>::infinity();
  auto sweep = [&](double k0_lo, double k0_hi, double k0_step, double k1_lo, double k1_hi,
                   double k1_step) {
    for (double k0 = k0_lo; k0 <= k0_hi + 1e-12; k0 += k0_step) {
      for (double k1 = k1_lo; k1 <= k1_hi + 1e-12; k1 += k1_step) {
        const ToyReturns ret =
            toy_policy_returns(cfg, gamma, starts, [&](double p) { return k0 + k1 * p; });
        if (ret.j_c <= feas_tol && ret.j_r > best.j_r)
          best = {k0, k1, ret.j_r, ret.j_c};
      }
    }
  };
  sweep(-2.0, 8.0, 0.1, -20.0, 2.0, 0.2);
  // Local refinement around the coarse winner.
  sweep(best.k0 - 0.1, best.k0 + 0.1, 0.01, best.k1 - 0.2, best.k1 + 0.2, 0.02);
  sweep(best.k0 - 0.01, best.k0 + 0.01, 0.001, best.k1 - 0.02, best.k1 + 0.02, 0.002);
  return best;
}

}  // namespace cmpg
