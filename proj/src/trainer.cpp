#include "cmpg/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "cmpg/errors.hpp"
#include "cmpg/tape.hpp"

namespace cmpg {

namespace {

constexpr uint64_t kNoiseSalt = 0x6f87c2d31b5ae94dull;  // exploration stream family
constexpr double kVarEps = 1e-8;

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double window_mean(const std::deque<double>& h, size_t first, size_t count) {
  double s = 0.0;
  for (size_t i = 0; i < count; ++i) s += h[first + i];
  return s / double(count);
}

std::vector<std::unique_ptr<Env>> build_envs(const ScenarioConfig& sc, int max_stps,
                                             uint64_t seed, int workers) {
  std::vector<std::unique_ptr<Env>> out;
  out.reserve(size_t(workers));
  for (int w = 0; w < workers; ++w) out.push_back(make_env(sc, max_stps, seed));
  return out;
}

}  // namespace

double critic_target_value(double dagger, double gamma, double q1, double q2) {
  return dagger + gamma * std::min(q1, q2);
}

GradientWeights mix_anneal(double progress) {
  double p = std::clamp(progress, 0.0, 1.0);
  double w_data = 0.5 * (1.0 - std::cos(M_PI * p));
  return {w_data, 1.0 - w_data};
}

void mixed_gradient(std::span<const double> gd, std::span<const double> gm, GradientWeights w,
                    std::span<double> out) {
  if (gd.size() != gm.size() || gd.size() != out.size())
    throw ConfigError("mixed_gradient: gradient layouts disagree (" + std::to_string(gd.size()) +
                      " vs " + std::to_string(gm.size()) + " vs " + std::to_string(out.size()) +
                      ")");
  if (w.w_data == 1.0 && w.w_model == 0.0) {
    std::copy(gd.begin(), gd.end(), out.begin());
    return;
  }
  if (w.w_data == 0.0 && w.w_model == 1.0) {
    std::copy(gm.begin(), gm.end(), out.begin());
    return;
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] = w.w_data * gd[i] + w.w_model * gm[i];
}

void penalty_gradient(std::span<const double> gr, std::span<const double> gc, double sigma,
                      std::span<double> out) {
  if (gr.size() != gc.size() || gr.size() != out.size())
    throw ConfigError("penalty_gradient: gradient layouts disagree (" + std::to_string(gr.size()) +
                      " vs " + std::to_string(gc.size()) + ")");
  for (size_t i = 0; i < out.size(); ++i) out[i] = -gr[i] + sigma * gc[i];
}

MixStats::MixStats(int probe_dim, double beta) : beta_(beta), n_(probe_dim) {
  mean_d_.assign(size_t(n_), 0.0);
  sq_d_.assign(size_t(n_), 0.0);
  mean_m_.assign(size_t(n_), 0.0);
  sq_m_.assign(size_t(n_), 0.0);
}

void MixStats::update(std::span<const double> probe_data, std::span<const double> probe_model) {
  if (int(probe_data.size()) != n_ || int(probe_model.size()) != n_)
    throw UsageError("MixStats::update: probe size mismatch");
  for (int i = 0; i < n_; ++i) {
    mean_d_[i] = beta_ * mean_d_[i] + (1.0 - beta_) * probe_data[i];
    sq_d_[i] = beta_ * sq_d_[i] + (1.0 - beta_) * probe_data[i] * probe_data[i];
    mean_m_[i] = beta_ * mean_m_[i] + (1.0 - beta_) * probe_model[i];
    sq_m_[i] = beta_ * sq_m_[i] + (1.0 - beta_) * probe_model[i] * probe_model[i];
  }
  ++updates_;
}

GradientWeights MixStats::weights(GradientWeights fallback) const {
  if (!ready() || n_ == 0) return fallback;
  double var_d = 0.0, var_m = 0.0;
  for (int i = 0; i < n_; ++i) {
    var_d += std::max(0.0, sq_d_[i] - mean_d_[i] * mean_d_[i]);
    var_m += std::max(0.0, sq_m_[i] - mean_m_[i] * mean_m_[i]);
  }
  var_d /= double(n_);
  var_m /= double(n_);
  if (!std::isfinite(var_d) || !std::isfinite(var_m)) return fallback;
  double inv_d = 1.0 / (var_d + kVarEps);
  double inv_m = 1.0 / (var_m + kVarEps);
  double w_data = inv_d / (inv_d + inv_m);
  if (!std::isfinite(w_data)) return fallback;
  return {w_data, 1.0 - w_data};
}

std::vector<double> MixStats::serialize() const {
  std::vector<double> out;
  out.push_back(beta_);
  out.push_back(double(n_));
  out.push_back(double(updates_));
  for (const auto* v : {&mean_d_, &sq_d_, &mean_m_, &sq_m_})
    out.insert(out.end(), v->begin(), v->end());
  return out;
}

void MixStats::restore(std::span<const double> payload) {
  if (payload.size() < 3) throw ConfigError("MixStats payload truncated");
  beta_ = payload[0];
  n_ = int(payload[1]);
  updates_ = long(payload[2]);
  if (payload.size() != size_t(3 + 4 * n_)) throw ConfigError("MixStats payload size mismatch");
  const double* p = payload.data() + 3;
  mean_d_.assign(p, p + n_);
  sq_d_.assign(p + n_, p + 2 * n_);
  mean_m_.assign(p + 2 * n_, p + 3 * n_);
  sq_m_.assign(p + 3 * n_, p + 4 * n_);
}

std::string IterRecord::to_json() const {
  std::string s = "{\"iter\":" + std::to_string(iter);
  s += ",\"outer\":" + std::to_string(outer);
  s += ",\"inner\":" + std::to_string(inner);
  s += ",\"sigma\":" + fmt_g17(sigma);
  s += ",\"w_data\":" + fmt_g17(w_data);
  s += ",\"j_r\":" + fmt_g17(j_r);
  s += ",\"j_c\":" + fmt_g17(j_c);
  s += ",\"loss_qr1\":" + fmt_g17(critic_loss[0]);
  s += ",\"loss_qr2\":" + fmt_g17(critic_loss[1]);
  s += ",\"loss_qc1\":" + fmt_g17(critic_loss[2]);
  s += ",\"loss_qc2\":" + fmt_g17(critic_loss[3]);
  s += ",\"gnorm_data\":" + fmt_g17(gnorm_data);
  s += ",\"gnorm_model\":" + fmt_g17(gnorm_model);
  s += ",\"episodes\":" + std::to_string(episodes);
  s += ",\"env_steps\":" + std::to_string(env_steps);
  s += ",\"wall_ms\":" + fmt_g17(wall_ms);
  s += "}";
  return s;
}

Trainer::Trainer(const FullConfig& cfg, uint64_t seed, int workers)
    : cfg_(cfg),
      seed_(seed),
      workers_(std::max(1, workers)),
      envs_(build_envs(cfg.scenario, cfg.encoder.max_stps, seed, std::max(1, workers))),
      model_(make_model(cfg.scenario, cfg.encoder.max_stps)),
      agent_(cfg_, *envs_[0]),
      buffer_(int(cfg.trainer.buffer_capacity), envs_[0]->obs_dim(), envs_[0]->stp_dim(),
              envs_[0]->max_stps(), envs_[0]->action_dim(), envs_[0]->model_state_dim()),
      rng_(Rng::stream(seed, 2)),
      step_noise_(Rng::stream(seed ^ kNoiseSalt, 0)),
      sigma_(cfg.trainer.sigma0) {
  const auto& tc = cfg_.trainer;
  if (tc.mix_mode != "anneal" && tc.mix_mode != "constant" && tc.mix_mode != "inverse_variance")
    throw ConfigError("trainer.mix_mode: unknown mode '" + tc.mix_mode + "'");
  if (tc.mix_w_data < 0.0 || tc.mix_w_data > 1.0)
    throw ConfigError("trainer.mix_w_data must lie in [0, 1]");
  if (tc.batch < 1) throw ConfigError("trainer.batch must be positive");
  if (tc.horizon_n < 1) throw ConfigError("trainer.horizon_n must be positive");

  agent_.init(seed);
  OptKind kind = opt_kind_from_name(tc.optimizer);
  auto& P = agent_.params();
  opt_theta_ = Optimizer(kind, P.info("theta").count);
  opt_phi_ = Optimizer(kind, agent_.has_encoder_params() ? P.info("phi").count : 0);
  critic_offset_ = P.offset_of("qr1");
  critic_count_ = P.offset_of("qc2") + P.info("qc2").count - critic_offset_;
  opt_critic_ = Optimizer(kind, critic_count_);
  probe_dim_ = std::min(64, P.info("theta").count);
  mix_stats_ = MixStats(probe_dim_, tc.ema_beta);
}

std::vector<double> Trainer::explore_action(const Observation& obs, Rng& noise) const {
  std::vector<double> a = agent_.act_plain(obs, false);
  auto lo = envs_[0]->action_low();
  auto hi = envs_[0]->action_high();
  for (size_t d = 0; d < a.size(); ++d) {
    double range = hi[d] - lo[d];
    a[d] = std::clamp(a[d] + noise.normal(0.0, cfg_.trainer.explore_noise * range), lo[d], hi[d]);
  }
  return a;
}

Trainer::EpisodeResult Trainer::run_episode(Env& env, uint64_t episode_index,
                                            bool explore) const {
  EpisodeResult ep;
  env.reset(episode_index);
  Rng noise = Rng::stream(seed_ ^ kNoiseSalt, episode_index);
  double disc = 1.0;
  Observation o = env.observe();
  while (true) {
    Transition tr;
    tr.obs = o;
    tr.ms = env.model_state();
    tr.action = explore ? explore_action(o, noise) : agent_.act_plain(o, false);
    StepResult sr = env.step(tr.action);
    tr.r = sr.r;
    tr.c = sr.c;
    tr.d = sr.d;
    tr.next = sr.obs;
    ep.j_r += disc * sr.r;
    ep.j_c += disc * sr.c;
    disc *= cfg_.trainer.gamma;
    ep.steps.push_back(std::move(tr));
    if (sr.done) {
      ep.completed = sr.completed;
      break;
    }
    o = std::move(sr.obs);
  }
  return ep;
}

void Trainer::collect_steps(int T) {
  Env& env = *envs_[0];
  for (int t = 0; t < T; ++t) {
    if (!episode_open_) {
      env.reset(next_episode_);
      step_noise_ = Rng::stream(seed_ ^ kNoiseSalt, next_episode_);
      ++next_episode_;
      episode_open_ = true;
    }
    Observation o = env.observe();
    std::vector<double> ms = env.model_state();
    std::vector<double> a = explore_action(o, step_noise_);
    StepResult sr = env.step(a);
    buffer_.push(o, a, sr.r, sr.c, sr.d, sr.obs, ms);
    ++env_steps_;
    if (sr.done) {
      episode_open_ = false;
      ++episodes_done_;
    }
  }
}

Trainer::CollectStats Trainer::collect_episodes(int n, bool explore) {
  CollectStats st;
  if (n <= 0) return st;
  std::vector<EpisodeResult> results;
  results.resize(size_t(n));
  uint64_t base = next_episode_;
  int lanes = std::min(workers_, n);
  if (lanes <= 1) {
    for (int i = 0; i < n; ++i) results[size_t(i)] = run_episode(*envs_[0], base + uint64_t(i), explore);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(size_t(lanes));
    for (int w = 0; w < lanes; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += lanes)
          results[size_t(i)] = run_episode(*envs_[size_t(w)], base + uint64_t(i), explore);
      });
    }
    for (auto& th : pool) th.join();
  }
  next_episode_ = base + uint64_t(n);
  episode_open_ = false;
  for (const auto& ep : results) {
    for (const auto& tr : ep.steps) {
      buffer_.push(tr.obs, tr.action, tr.r, tr.c, tr.d, tr.next, tr.ms);
      ++env_steps_;
      ++st.steps;
    }
    st.j_r += ep.j_r;
    st.j_c += ep.j_c;
    st.completed += ep.completed ? 1 : 0;
  }
  st.episodes = n;
  st.j_r /= double(n);
  st.j_c /= double(n);
  episodes_done_ += n;
  return st;
}

Observation Trainer::obs_at(int i, bool next) const {
  Observation o;
  auto x = next ? buffer_.next_x(i) : buffer_.x(i);
  o.x.assign(x.begin(), x.end());
  int count = next ? buffer_.next_stp_count(i) : buffer_.stp_count(i);
  o.stps.reserve(size_t(count));
  for (int k = 0; k < count; ++k) {
    auto f = next ? buffer_.next_stp(i, k) : buffer_.stp(i, k);
    o.stps.emplace_back(f.begin(), f.end());
  }
  return o;
}

void Trainer::critic_targets(std::span<const int> idx, std::vector<double>& y_r,
                             std::vector<double>& y_c) {
  const auto& tc = cfg_.trainer;
  auto lo = envs_[0]->action_low();
  auto hi = envs_[0]->action_high();
  y_r.resize(idx.size());
  y_c.resize(idx.size());
  for (size_t b = 0; b < idx.size(); ++b) {
    int i = idx[b];
    Observation next = obs_at(i, true);
    std::vector<double> s = agent_.encode_plain(next, true);
    std::vector<double> a = agent_.policy_plain(s, true);
    if (tc.target_smoothing) {
      for (size_t d = 0; d < a.size(); ++d) {
        double range = hi[d] - lo[d];
        double clip = tc.smooth_noise_clip * range;
        double e = std::clamp(rng_.normal(0.0, tc.smooth_noise_std * range), -clip, clip);
        a[d] = std::clamp(a[d] + e, lo[d], hi[d]);
      }
    }
    double qr1 = agent_.q_plain(Critic::R1, true, s, a);
    double qr2 = agent_.q_plain(Critic::R2, true, s, a);
    double qc1 = agent_.q_plain(Critic::C1, true, s, a);
    double qc2 = agent_.q_plain(Critic::C2, true, s, a);
    y_r[b] = critic_target_value(buffer_.reward(i), tc.gamma, qr1, qr2);
    y_c[b] = critic_target_value(buffer_.cost(i), tc.gamma, qc1, qc2);
  }
}

std::array<double, 4> Trainer::critic_loss_grad(std::span<const int> idx,
                                                std::span<const double> y_r,
                                                std::span<const double> y_c,
                                                std::span<double> grad) {
  auto& P = agent_.params();
  if (int(grad.size()) != P.size())
    throw UsageError("critic_loss_grad: gradient buffer must span the full parameter vector");
  std::fill(grad.begin(), grad.end(), 0.0);

  const nn::MlpSpec& cs = agent_.critic_spec();
  ad::Tape t;
  std::array<nn::MlpVars, 4> critics = {
      nn::mlp_bind(t, cs, P.slice("qr1"), P.offset_of("qr1"), true),
      nn::mlp_bind(t, cs, P.slice("qr2"), P.offset_of("qr2"), true),
      nn::mlp_bind(t, cs, P.slice("qc1"), P.offset_of("qc1"), true),
      nn::mlp_bind(t, cs, P.slice("qc2"), P.offset_of("qc2"), true)};
  std::array<ad::Var, 4> sums = {t.constant_scalar(0.0), t.constant_scalar(0.0),
                                 t.constant_scalar(0.0), t.constant_scalar(0.0)};
  for (size_t b = 0; b < idx.size(); ++b) {
    int i = idx[b];
    Observation obs = obs_at(i, false);
    std::vector<double> in = agent_.encode_plain(obs, false);
    auto act = buffer_.action(i);
    in.insert(in.end(), act.begin(), act.end());
    ad::Var in_v = t.constant(in);
    std::array<double, 4> targets = {y_r[b], y_r[b], y_c[b], y_c[b]};
    for (int k = 0; k < 4; ++k) {
      ad::Var q = nn::mlp_apply(t, cs, critics[size_t(k)], in_v);
      sums[size_t(k)] = sums[size_t(k)] + ad::square(q - targets[size_t(k)]);
    }
  }
  double inv = 0.5 / double(idx.size());
  std::array<double, 4> losses;
  ad::Var total = t.constant_scalar(0.0);
  for (int k = 0; k < 4; ++k) {
    ad::Var loss_k = t.scale(sums[size_t(k)], inv);
    losses[size_t(k)] = t.scalar(loss_k);
    total = total + loss_k;
  }
  if (std::isfinite(t.scalar(total))) t.backward_scalar(total, grad);
  return losses;
}

double Trainer::critic_loss_value(std::span<const int> idx, std::span<const double> y_r,
                                  std::span<const double> y_c) const {
  double total = 0.0;
  for (size_t b = 0; b < idx.size(); ++b) {
    int i = idx[b];
    Observation obs = obs_at(i, false);
    std::vector<double> s = agent_.encode_plain(obs, false);
    auto act = buffer_.action(i);
    std::vector<double> a(act.begin(), act.end());
    for (Critic k : {Critic::R1, Critic::R2}) {
      double e = agent_.q_plain(k, false, s, a) - y_r[b];
      total += 0.5 * e * e;
    }
    for (Critic k : {Critic::C1, Critic::C2}) {
      double e = agent_.q_plain(k, false, s, a) - y_c[b];
      total += 0.5 * e * e;
    }
  }
  return total / double(idx.size());
}

std::array<double, 4> Trainer::critic_update(std::span<const int> idx) {
  if (idx.empty()) throw UsageError("critic_update: empty batch");
  std::vector<double> y_r, y_c;
  critic_targets(idx, y_r, y_c);

  auto& P = agent_.params();
  std::vector<double> g(size_t(P.size()), 0.0);
  last_losses_ = critic_loss_grad(idx, y_r, y_c, g);
  double total = last_losses_[0] + last_losses_[1] + last_losses_[2] + last_losses_[3];
  if (!std::isfinite(total)) {
    ++critic_skipped_;
    std::fprintf(stderr, "warning: non-finite critic loss, update skipped\n");
    return last_losses_;
  }
  opt_critic_.step(P.data().subspan(size_t(critic_offset_), size_t(critic_count_)),
                   std::span<const double>(g).subspan(size_t(critic_offset_), size_t(critic_count_)),
                   cfg_.trainer.lr_critic);
  return last_losses_;
}

bool Trainer::data_gradient(std::span<const int> idx, std::span<double> grad_r,
                            std::span<double> grad_c) {
  auto& P = agent_.params();
  if (int(grad_r.size()) != P.size() || int(grad_c.size()) != P.size())
    throw UsageError("data_gradient: gradient buffers must span the full parameter vector");
  std::fill(grad_r.begin(), grad_r.end(), 0.0);
  std::fill(grad_c.begin(), grad_c.end(), 0.0);
  if (idx.empty()) throw UsageError("data_gradient: empty batch");

  int safe = 0;
  for (int i : idx) safe += buffer_.done(i) ? 0 : 1;
  if (safe == 0) return false;

  ad::Tape t;
  bool has_enc = agent_.has_encoder_params();
  enc::EncoderVars ev;
  if (has_enc)
    ev = enc::encoder_bind(t, agent_.encoder_spec(), P.slice("phi"), P.offset_of("phi"), true);
  nn::MlpVars pol = nn::mlp_bind(t, agent_.policy_spec(), P.slice("theta"), P.offset_of("theta"), true);
  nn::MlpVars qr = nn::mlp_bind(t, agent_.critic_spec(), P.slice("qr1"), P.offset_of("qr1"), false);
  nn::MlpVars qc = nn::mlp_bind(t, agent_.critic_spec(), P.slice("qc1"), P.offset_of("qc1"), false);

  ad::Var sum_r = t.constant_scalar(0.0);
  ad::Var sum_c = t.constant_scalar(0.0);
  for (int i : idx) {
    if (buffer_.done(i)) continue;  // (1 - d) masks the term out exactly
    Observation obs = obs_at(i, false);
    std::vector<ad::Var> members;
    members.reserve(obs.stps.size());
    for (const auto& f : obs.stps) members.push_back(t.constant(agent_.normalize_stp(f)));
    ad::Var xn = t.constant(agent_.normalize_x(obs.x));
    ad::Var s = agent_.state_tape(t, has_enc ? &ev : nullptr, members, xn);
    ad::Var a = nn::mlp_apply(t, agent_.policy_spec(), pol, s);
    ad::Var in = t.concat(std::array<ad::Var, 2>{s, a});
    sum_r = sum_r + nn::mlp_apply(t, agent_.critic_spec(), qr, in);
    sum_c = sum_c + nn::mlp_apply(t, agent_.critic_spec(), qc, in);
  }
  double inv = 1.0 / double(idx.size());
  ad::Var obj_r = t.scale(sum_r, inv);
  ad::Var obj_c = t.scale(sum_c, inv);
  t.backward_scalar(obj_r, grad_r);
  t.backward_scalar(obj_c, grad_c);
  return true;
}

double Trainer::data_objective(std::span<const int> idx, bool cost) const {
  if (idx.empty()) throw UsageError("data_objective: empty batch");
  double total = 0.0;
  for (int i : idx) {
    if (buffer_.done(i)) continue;
    Observation obs = obs_at(i, false);
    std::vector<double> s = agent_.encode_plain(obs, false);
    std::vector<double> a = agent_.policy_plain(s, false);
    total += agent_.q_plain(cost ? Critic::C1 : Critic::R1, false, s, a);
  }
  return total / double(idx.size());
}

int Trainer::model_gradient(std::span<const int> idx, std::span<double> grad_r,
                            std::span<double> grad_c) {
  auto& P = agent_.params();
  if (int(grad_r.size()) != P.size() || int(grad_c.size()) != P.size())
    throw UsageError("model_gradient: gradient buffers must span the full parameter vector");
  std::fill(grad_r.begin(), grad_r.end(), 0.0);
  std::fill(grad_c.begin(), grad_c.end(), 0.0);
  if (idx.empty()) throw UsageError("model_gradient: empty batch");

  const auto& tc = cfg_.trainer;
  bool has_enc = agent_.has_encoder_params();
  int dropped = 0;
  double seed_val = 1.0 / double(idx.size());
  std::span<const double> seed(&seed_val, 1);
  for (int i : idx) {
    if (buffer_.done(i)) continue;
    ad::Tape t;
    enc::EncoderVars ev;
    if (has_enc)
      ev = enc::encoder_bind(t, agent_.encoder_spec(), P.slice("phi"), P.offset_of("phi"), true);
    nn::MlpVars pol =
        nn::mlp_bind(t, agent_.policy_spec(), P.slice("theta"), P.offset_of("theta"), true);
    nn::MlpVars qr = nn::mlp_bind(t, agent_.critic_spec(), P.slice("qr1"), P.offset_of("qr1"), false);
    nn::MlpVars qc = nn::mlp_bind(t, agent_.critic_spec(), P.slice("qc1"), P.offset_of("qc1"), false);

    auto roll = model_->begin(t, buffer_.model_state(i), tc.horizon_n);
    ad::Var sum_r = t.constant_scalar(0.0);
    ad::Var sum_c = t.constant_scalar(0.0);
    double disc = 1.0;
    for (int step = 0; step < tc.horizon_n; ++step) {
      auto ov = roll->observe(t);
      std::vector<ad::Var> members;
      members.reserve(ov.members.size());
      for (ad::Var m : ov.members) members.push_back(agent_.normalize_stp_tape(t, m));
      ad::Var xn = agent_.normalize_x_tape(t, ov.x);
      ad::Var s = agent_.state_tape(t, has_enc ? &ev : nullptr, members, xn);
      ad::Var a = nn::mlp_apply(t, agent_.policy_spec(), pol, s);
      auto [r, c] = roll->step(t, a);
      sum_r = sum_r + r * disc;
      sum_c = sum_c + c * disc;
      disc *= tc.gamma;
    }
    auto ov = roll->observe(t);
    std::vector<ad::Var> members;
    members.reserve(ov.members.size());
    for (ad::Var m : ov.members) members.push_back(agent_.normalize_stp_tape(t, m));
    ad::Var xn = agent_.normalize_x_tape(t, ov.x);
    ad::Var s_n = agent_.state_tape(t, has_enc ? &ev : nullptr, members, xn);
    ad::Var a_n = nn::mlp_apply(t, agent_.policy_spec(), pol, s_n);
    ad::Var in = t.concat(std::array<ad::Var, 2>{s_n, a_n});
    sum_r = sum_r + nn::mlp_apply(t, agent_.critic_spec(), qr, in) * disc;
    sum_c = sum_c + nn::mlp_apply(t, agent_.critic_spec(), qc, in) * disc;

    if (!t.values_finite()) {
      ++dropped;
      continue;
    }
    t.backward(sum_r, seed, grad_r);
    t.backward(sum_c, seed, grad_c);
  }
  model_dropped_total_ += dropped;
  return dropped;
}

double Trainer::model_objective(std::span<const int> idx, bool cost) {
  if (idx.empty()) throw UsageError("model_objective: empty batch");
  const auto& tc = cfg_.trainer;
  bool has_enc = agent_.has_encoder_params();
  auto& P = agent_.params();
  double total = 0.0;
  for (int i : idx) {
    if (buffer_.done(i)) continue;
    ad::Tape t;
    enc::EncoderVars ev;
    if (has_enc)
      ev = enc::encoder_bind(t, agent_.encoder_spec(), P.slice("phi"), P.offset_of("phi"), true);
    nn::MlpVars pol =
        nn::mlp_bind(t, agent_.policy_spec(), P.slice("theta"), P.offset_of("theta"), true);
    nn::MlpVars q = cost ? nn::mlp_bind(t, agent_.critic_spec(), P.slice("qc1"),
                                        P.offset_of("qc1"), false)
                         : nn::mlp_bind(t, agent_.critic_spec(), P.slice("qr1"),
                                        P.offset_of("qr1"), false);
    auto roll = model_->begin(t, buffer_.model_state(i), tc.horizon_n);
    ad::Var sum = t.constant_scalar(0.0);
    double disc = 1.0;
    for (int step = 0; step < tc.horizon_n; ++step) {
      auto ov = roll->observe(t);
      std::vector<ad::Var> members;
      for (ad::Var m : ov.members) members.push_back(agent_.normalize_stp_tape(t, m));
      ad::Var xn = agent_.normalize_x_tape(t, ov.x);
      ad::Var s = agent_.state_tape(t, has_enc ? &ev : nullptr, members, xn);
      ad::Var a = nn::mlp_apply(t, agent_.policy_spec(), pol, s);
      auto [r, c] = roll->step(t, a);
      sum = sum + (cost ? c : r) * disc;
      disc *= tc.gamma;
    }
    auto ov = roll->observe(t);
    std::vector<ad::Var> members;
    for (ad::Var m : ov.members) members.push_back(agent_.normalize_stp_tape(t, m));
    ad::Var xn = agent_.normalize_x_tape(t, ov.x);
    ad::Var s_n = agent_.state_tape(t, has_enc ? &ev : nullptr, members, xn);
    ad::Var a_n = nn::mlp_apply(t, agent_.policy_spec(), pol, s_n);
    ad::Var in = t.concat(std::array<ad::Var, 2>{s_n, a_n});
    sum = sum + nn::mlp_apply(t, agent_.critic_spec(), q, in) * disc;
    total += t.scalar(sum);
  }
  return total / double(idx.size());
}

double Trainer::progress() const {
  const auto& tc = cfg_.trainer;
  long total = std::max(1L, long(tc.max_outer) * long(tc.max_inner) - 1);
  return std::clamp(double(iter_total_) / double(total), 0.0, 1.0);
}

GradientWeights Trainer::mix_weights() {
  const auto& tc = cfg_.trainer;
  GradientWeights constants{tc.mix_w_data, 1.0 - tc.mix_w_data};
  if (tc.mix_mode == "constant") return constants;
  if (tc.mix_mode == "anneal") return mix_anneal(progress());
  return mix_stats_.weights(constants);
}

GradientWeights Trainer::policy_update(std::span<const int> idx, std::span<const int> model_idx) {
  auto& P = agent_.params();
  const auto& tc = cfg_.trainer;
  size_t n = size_t(P.size());
  std::vector<double> gdr(n, 0.0), gdc(n, 0.0), gmr(n, 0.0), gmc(n, 0.0);
  data_gradient(idx, gdr, gdc);
  model_gradient(model_idx, gmr, gmc);

  std::vector<double> pd(n, 0.0), pm(n, 0.0);
  penalty_gradient(gdr, gdc, sigma_, pd);
  penalty_gradient(gmr, gmc, sigma_, pm);

  int toff = P.offset_of("theta");
  int tcnt = P.info("theta").count;
  if (tc.mix_mode == "inverse_variance")
    mix_stats_.update(std::span<const double>(pd).subspan(size_t(toff), size_t(probe_dim_)),
                      std::span<const double>(pm).subspan(size_t(toff), size_t(probe_dim_)));
  GradientWeights w = mix_weights();
  last_w_data_ = w.w_data;

  std::vector<double> mr(n, 0.0), mc(n, 0.0), gp(n, 0.0);
  mixed_gradient(gdr, gmr, w, mr);
  mixed_gradient(gdc, gmc, w, mc);
  penalty_gradient(mr, mc, sigma_, gp);

  size_t trainable = size_t(toff + tcnt);  // encoder slice (when present) precedes theta
  gnorm_data_ = l2_norm(std::span<const double>(pd).first(trainable));
  gnorm_model_ = l2_norm(std::span<const double>(pm).first(trainable));

  opt_theta_.step(P.slice("theta"),
                  std::span<const double>(gp).subspan(size_t(toff), size_t(tcnt)), tc.lr_policy);
  if (agent_.has_encoder_params()) {
    int poff = P.offset_of("phi");
    int pcnt = P.info("phi").count;
    opt_phi_.step(P.slice("phi"),
                  std::span<const double>(gp).subspan(size_t(poff), size_t(pcnt)), tc.lr_encoder);
  }
  agent_.soft_update_targets(tc.tau);
  return w;
}

std::vector<int> Trainer::sample_batch(int n) {
  std::vector<int> idx(size_t(n), 0);
  for (int& i : idx) i = buffer_.sample(rng_);
  return idx;
}

TrainResult Trainer::train(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/checkpoints");
  fs::create_directories(out_dir + "/logs");
  std::ofstream log(out_dir + "/logs/train.jsonl", std::ios::app);
  if (!log) throw UsageError("cannot open " + out_dir + "/logs/train.jsonl for writing");

  const auto& tc = cfg_.trainer;
  TrainResult res;
  bool stop = false;
  for (; outer_ < tc.max_outer && !stop;) {
    for (; inner_ < tc.max_inner;) {
      auto t0 = std::chrono::steady_clock::now();
      CollectStats cs = collect_episodes(tc.episodes_per_iter, true);
      double w_used = -1.0;
      bool warm = episodes_done_ >= long(tc.warmup_episodes) && buffer_.size() >= tc.batch;
      if (warm) {
        for (int u = 0; u < tc.updates_per_iter; ++u) {
          std::vector<int> idx = sample_batch(tc.batch);
          critic_update(idx);
          if ((u + 1) % tc.policy_every == 0) {
            std::vector<int> midx = sample_batch(tc.model_batch);
            w_used = policy_update(idx, midx).w_data;
          }
        }
      }
      auto t1 = std::chrono::steady_clock::now();

      IterRecord rec;
      rec.iter = iter_total_;
      rec.outer = outer_;
      rec.inner = inner_;
      rec.sigma = sigma_;
      rec.w_data = w_used >= 0.0 ? w_used : mix_weights().w_data;
      rec.j_r = cs.j_r;
      rec.j_c = cs.j_c;
      rec.critic_loss = last_losses_;
      rec.gnorm_data = gnorm_data_;
      rec.gnorm_model = gnorm_model_;
      rec.episodes = episodes_done_;
      rec.env_steps = env_steps_;
      rec.wall_ms =
          tc.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
      log << rec.to_json() << "\n";
      log.flush();

      double jp = -cs.j_r + sigma_ * cs.j_c;
      jp_hist_.push_back(jp);
      while (jp_hist_.size() > size_t(tc.inner_window) + 1) jp_hist_.pop_front();
      ++iter_total_;
      ++inner_;

      if (tc.checkpoint_every > 0 && inner_ % tc.checkpoint_every == 0)
        save_checkpoint(out_dir + "/checkpoints/iter_" + std::to_string(iter_total_) + ".ckpt");

      double worst = 0.0;
      bool finite = std::isfinite(jp);
      for (double l : last_losses_) {
        if (!std::isfinite(l)) finite = false;
        worst = std::max(worst, std::abs(l));
      }
      bool bad = !finite || worst > tc.divergence_loss || std::abs(jp) > tc.divergence_loss;
      diverge_streak_ = bad ? diverge_streak_ + 1 : 0;
      if (diverge_streak_ >= tc.divergence_iters) {
        std::ofstream diag(out_dir + "/logs/divergence.json");
        diag << "{\"diverged\":true,\"iter\":" << iter_total_ << ",\"outer\":" << outer_
             << ",\"sigma\":" << fmt_g17(sigma_) << ",\"j_p\":" << fmt_g17(jp)
             << ",\"loss_qr1\":" << fmt_g17(last_losses_[0])
             << ",\"loss_qr2\":" << fmt_g17(last_losses_[1])
             << ",\"loss_qc1\":" << fmt_g17(last_losses_[2])
             << ",\"loss_qc2\":" << fmt_g17(last_losses_[3])
             << ",\"streak\":" << diverge_streak_ << "}\n";
        save_checkpoint(out_dir + "/checkpoints/diverged.ckpt");
        res.diverged = true;
        stop = true;
        break;
      }

      if (inner_ >= tc.min_inner && jp_hist_.size() == size_t(tc.inner_window) + 1) {
        double now = window_mean(jp_hist_, 1, size_t(tc.inner_window));
        double prev = window_mean(jp_hist_, 0, size_t(tc.inner_window));
        double rel = std::abs(now - prev) / std::max(1.0, std::abs(prev));
        if (rel < tc.inner_tol) break;
      }
    }
    if (stop) break;
    sigma_ *= tc.sigma_grow;
    ++outer_;
    inner_ = 0;
    jp_hist_.clear();
  }

  res.iterations = iter_total_;
  res.episodes = uint64_t(episodes_done_);
  res.env_steps = env_steps_;
  save_checkpoint(out_dir + "/checkpoints/final.ckpt");
  return res;
}

void Trainer::save_checkpoint(const std::string& path) const {
  const auto& P = agent_.params();
  Checkpoint ck;
  ck.add("params", std::vector<double>(P.data().begin(), P.data().end()));
  ck.add("opt_theta", opt_theta_.state());
  ck.add("opt_phi", opt_phi_.state());
  ck.add("opt_critic", opt_critic_.state());
  auto rs = rng_.state();
  std::vector<double> rv(4);
  for (int k = 0; k < 4; ++k) rv[size_t(k)] = std::bit_cast<double>(rs[size_t(k)]);
  ck.add("rng", rv);
  ck.add("counters",
         {double(next_episode_), double(iter_total_), double(outer_), double(inner_),
          double(env_steps_), double(episodes_done_), double(diverge_streak_),
          double(critic_skipped_), double(model_dropped_total_)});
  ck.add("sigma", {sigma_});
  ck.add("last", {last_losses_[0], last_losses_[1], last_losses_[2], last_losses_[3],
                  gnorm_data_, gnorm_model_, last_w_data_});
  ck.add("jp_hist", std::vector<double>(jp_hist_.begin(), jp_hist_.end()));
  ck.add("mix_stats", mix_stats_.serialize());
  ck.add("hyper",
         {cfg_.trainer.gamma, double(cfg_.trainer.horizon_n), double(P.size()),
          double(buffer_.obs_dim()), double(buffer_.stp_dim()), double(buffer_.max_stps()),
          double(buffer_.act_dim()), double(buffer_.ms_dim())});
  if (cfg_.trainer.buffer_in_checkpoint) ck.add("buffer", buffer_.serialize());
  ck.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  auto& P = agent_.params();

  const auto& hyper = ck.require("hyper");
  if (hyper.size() != 8) throw ConfigError("checkpoint: unexpected hyper section size");
  if (int(hyper[2]) != P.size())
    throw ConfigError("checkpoint: parameter count " + std::to_string(long(hyper[2])) +
                      " does not match this configuration (" + std::to_string(P.size()) + ")");
  if (int(hyper[3]) != buffer_.obs_dim() || int(hyper[4]) != buffer_.stp_dim() ||
      int(hyper[5]) != buffer_.max_stps() || int(hyper[6]) != buffer_.act_dim() ||
      int(hyper[7]) != buffer_.ms_dim())
    throw ConfigError("checkpoint: environment dimensions do not match this configuration");

  const auto& pv = ck.require("params");
  if (int(pv.size()) != P.size()) throw ConfigError("checkpoint: params section size mismatch");
  std::copy(pv.begin(), pv.end(), P.data().begin());
  opt_theta_.set_state(ck.require("opt_theta"));
  opt_phi_.set_state(ck.require("opt_phi"));
  opt_critic_.set_state(ck.require("opt_critic"));

  const auto& rv = ck.require("rng");
  if (rv.size() != 4) throw ConfigError("checkpoint: rng section size mismatch");
  std::array<uint64_t, 4> rs;
  for (int k = 0; k < 4; ++k) rs[size_t(k)] = std::bit_cast<uint64_t>(rv[size_t(k)]);
  rng_.set_state(rs);

  const auto& cv = ck.require("counters");
  if (cv.size() != 9) throw ConfigError("checkpoint: counters section size mismatch");
  next_episode_ = uint64_t(cv[0]);
  iter_total_ = long(cv[1]);
  outer_ = int(cv[2]);
  inner_ = int(cv[3]);
  env_steps_ = long(cv[4]);
  episodes_done_ = long(cv[5]);
  diverge_streak_ = int(cv[6]);
  critic_skipped_ = int(cv[7]);
  model_dropped_total_ = int(cv[8]);
  episode_open_ = false;

  sigma_ = ck.require("sigma").at(0);
  const auto& last = ck.require("last");
  if (last.size() != 7) throw ConfigError("checkpoint: last section size mismatch");
  for (int k = 0; k < 4; ++k) last_losses_[size_t(k)] = last[size_t(k)];
  gnorm_data_ = last[4];
  gnorm_model_ = last[5];
  last_w_data_ = last[6];

  const auto& hist = ck.require("jp_hist");
  jp_hist_.assign(hist.begin(), hist.end());
  mix_stats_.restore(ck.require("mix_stats"));
  if (const auto* buf = ck.find("buffer")) buffer_.restore(*buf);
}

}  // namespace cmpg
