#pragma once

#include <array>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/diff_model.hpp"
#include "cmpg/nets.hpp"
#include "cmpg/optim.hpp"
#include "cmpg/replay.hpp"
#include "cmpg/rng.hpp"

namespace cmpg {

struct GradientWeights {
  double w_data = 0.5;
  double w_model = 0.5;
};

// Clipped double Q target: dagger + gamma * min of the two target critics.
// Applied to reward and cost returns alike; deliberately no safety mask.
double critic_target_value(double dagger, double gamma, double q1, double q2);

// Cosine-shaped schedule from all-model at progress 0 to all-data at 1.
GradientWeights mix_anneal(double progress);

// out = w_data * gd + w_model * gm, elementwise. The all-data and all-model
// corners copy the untouched source so degeneration is bitwise.
void mixed_gradient(std::span<const double> gd, std::span<const double> gm, GradientWeights w,
                    std::span<double> out);

// out = -gr + sigma * gc (exterior-point exact penalty, |.| dropped since
// the discounted cost is non-negative).
void penalty_gradient(std::span<const double> gr, std::span<const double> gc, double sigma,
                      std::span<double> out);

// Exponential moving estimate of per-source gradient variance over a probe
// subspace, for the inverse-variance mixing rule.
class MixStats {
 public:
  MixStats() = default;
  MixStats(int probe_dim, double beta);

  void update(std::span<const double> probe_data, std::span<const double> probe_model);
  bool ready() const { return updates_ >= 2; }
  // w_source proportional to 1 / (variance + eps); falls back when the
  // statistics are missing or non-finite.
  GradientWeights weights(GradientWeights fallback) const;

  std::vector<double> serialize() const;
  void restore(std::span<const double> payload);

 private:
  double beta_ = 0.9;
  int n_ = 0;
  long updates_ = 0;
  std::vector<double> mean_d_, sq_d_, mean_m_, sq_m_;
};

// One training-log line; serialized as JSON with a fixed key order and
// fixed float formatting so logs are byte-comparable across runs.
struct IterRecord {
  long iter = 0;
  int outer = 0, inner = 0;
  double sigma = 0.0, w_data = 0.0;
  double j_r = 0.0, j_c = 0.0;
  std::array<double, 4> critic_loss{};  // qr1 qr2 qc1 qc2
  double gnorm_data = 0.0, gnorm_model = 0.0;
  long episodes = 0;
  long env_steps = 0;
  double wall_ms = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  bool diverged = false;
  long iterations = 0;
  uint64_t episodes = 0;
  long env_steps = 0;
};

class Trainer {
 public:
  Trainer(const FullConfig& cfg, uint64_t seed, int workers = 1);

  Agent& agent() { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  Env& env() { return *envs_[0]; }
  const FullConfig& config() const { return cfg_; }
  double sigma() const { return sigma_; }
  uint64_t next_episode() const { return next_episode_; }

  // Appends T environment steps under the exploring policy, auto-resetting
  // finished episodes.
  void collect_steps(int T);
  // Runs `n` full episodes (in parallel across workers when configured,
  // merged in episode order) and appends their transitions. Returns the
  // per-episode discounted return / cost / completion stats averaged.
  struct CollectStats {
    double j_r = 0.0, j_c = 0.0;
    long steps = 0;
    int completed = 0, episodes = 0;
  };
  CollectStats collect_episodes(int n, bool explore = true);

  // Per-transition targets for the four critics: {y_r, y_c}. Consumes
  // smoothing noise from the trainer stream in batch order.
  void critic_targets(std::span<const int> idx, std::vector<double>& y_r,
                      std::vector<double>& y_c);
  // One squared-error step on all four critics; policy and encoder stay
  // bitwise untouched. Returns the four mean losses.
  std::array<double, 4> critic_update(std::span<const int> idx);
  // The four mean losses against fixed targets; the grad variant also fills
  // the loss gradient over the full parameter vector, the value variant is
  // tape-free for finite-difference probes.
  std::array<double, 4> critic_loss_grad(std::span<const int> idx,
                                         std::span<const double> y_r,
                                         std::span<const double> y_c, std::span<double> grad);
  double critic_loss_value(std::span<const int> idx, std::span<const double> y_r,
                           std::span<const double> y_c) const;

  // Ascent gradients of the masked batch objectives over the full parameter
  // vector (only theta/phi entries are populated). Returns false when every
  // sample in the batch is unsafe (gradients are zero then).
  bool data_gradient(std::span<const int> idx, std::span<double> grad_r, std::span<double> grad_c);
  // BPTT gradients through the analytic model; returns the number of
  // dropped (non-finite) rollouts.
  int model_gradient(std::span<const int> idx, std::span<double> grad_r, std::span<double> grad_c);

  // Plain-eval objective values matching the two gradient ops, for
  // finite-difference verification.
  double data_objective(std::span<const int> idx, bool cost) const;
  double model_objective(std::span<const int> idx, bool cost);

  GradientWeights mix_weights();

  // One policy/encoder update from the given batches: mixes the two gradient
  // sources, applies the exact penalty, and descends. Returns the weights
  // used.
  GradientWeights policy_update(std::span<const int> idx, std::span<const int> model_idx);

  TrainResult train(const std::string& out_dir);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  int critic_steps_skipped() const { return critic_skipped_; }
  double last_gnorm_data() const { return gnorm_data_; }
  double last_gnorm_model() const { return gnorm_model_; }

 private:
  struct Transition {
    Observation obs, next;
    std::vector<double> action, ms;
    double r = 0.0, c = 0.0;
    int d = 0;
  };
  struct EpisodeResult {
    std::vector<Transition> steps;
    double j_r = 0.0, j_c = 0.0;
    bool completed = false;
  };

  EpisodeResult run_episode(Env& env, uint64_t episode_index, bool explore) const;
  std::vector<double> explore_action(const Observation& obs, Rng& noise) const;
  std::vector<int> sample_batch(int n);
  Observation obs_at(int i, bool next) const;
  double progress() const;

  FullConfig cfg_;
  uint64_t seed_;
  int workers_;
  int critic_offset_ = 0, critic_count_ = 0;
  int probe_dim_ = 0;
  std::vector<std::unique_ptr<Env>> envs_;
  std::unique_ptr<DiffModel> model_;
  Agent agent_;
  ReplayBuffer buffer_;
  Optimizer opt_theta_, opt_phi_, opt_critic_;
  Rng rng_;
  Rng step_noise_;
  MixStats mix_stats_;

  double sigma_;
  uint64_t next_episode_ = 0;
  bool episode_open_ = false;
  long iter_total_ = 0;
  int outer_ = 0, inner_ = 0;
  long env_steps_ = 0;
  long episodes_done_ = 0;
  int diverge_streak_ = 0;
  std::deque<double> jp_hist_;
  std::array<double, 4> last_losses_{};
  double gnorm_data_ = 0.0, gnorm_model_ = 0.0;
  double last_w_data_ = -1.0;
  int critic_skipped_ = 0;
  int model_dropped_total_ = 0;
};

}  // namespace cmpg
