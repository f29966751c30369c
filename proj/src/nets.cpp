#include "cmpg/nets.hpp"

#include <algorithm>
#include <cmath>

#include "cmpg/dynamics.hpp"
#include "cmpg/errors.hpp"
#include "cmpg/rng.hpp"

namespace cmpg {
namespace {

// Stand-in participant substituted when no STP is perceived: parked directly
// ahead at the far perception edge with zero velocity. For the driving
// feature layout this is a vehicle-typed ghost; other layouts fall back to
// the feature upper bounds.
std::vector<double> ghost_feature_raw(const NormTable& norm, const ScenarioConfig& sc) {
  const size_t d2 = norm.stp_hi.size();
  if (int(d2) == stpf::kDim) {
    std::vector<double> g(d2, 0.0);
    g[stpf::kDy] = norm.stp_hi[stpf::kDy];
    g[stpf::kLength] = sc.vehicle.length;
    g[stpf::kWidth] = sc.vehicle.width;
    g[stpf::kTypeOneHot] = 1.0;
    return g;
  }
  return {norm.stp_hi.begin(), norm.stp_hi.end()};
}

std::vector<double> normalize_with(std::span<const double> raw, std::span<const double> lo,
                                   std::span<const double> hi) {
  if (raw.size() != lo.size()) throw UsageError("Agent: vector size mismatch in normalization");
  std::vector<double> out(raw.size(), 0.0);
  for (size_t i = 0; i < raw.size(); ++i)
    out[i] = dyn::normalize_clamped(raw[i], lo[i], hi[i]);
  return out;
}

ad::Var normalize_tape_with(ad::Tape& t, ad::Var raw, std::span<const double> lo,
                            std::span<const double> hi) {
  if (size_t(t.len(raw)) != lo.size())
    throw UsageError("Agent: vector size mismatch in normalization");
  std::vector<double> scale(lo.size(), 0.0);
  for (size_t i = 0; i < lo.size(); ++i) scale[i] = 2.0 / (hi[i] - lo[i]);
  const ad::Var lo_c = t.constant(lo);
  const ad::Var sc_c = t.constant(scale);
  const ad::Var unit = t.add_const(t.mul(t.sub(raw, lo_c), sc_c), -1.0);
  return unit - ad::relu(unit - 1.0) + ad::relu(-1.0 - unit);
}

}  // namespace

const char* critic_slice_name(Critic q, bool target) {
  switch (q) {
    case Critic::R1: return target ? "qr1_t" : "qr1";
    case Critic::R2: return target ? "qr2_t" : "qr2";
    case Critic::C1: return target ? "qc1_t" : "qc1";
    case Critic::C2: return target ? "qc2_t" : "qc2";
  }
  throw UsageError("critic_slice_name: bad critic id");
}

Agent::Agent(const FullConfig& cfg, const Env& env)
    : obs_dim_(env.obs_dim()), stp_dim_(env.stp_dim()), act_dim_(env.action_dim()),
      max_stps_(env.max_stps()), enc_kind_(cfg.encoder.kind), norm_(env.norm()) {
  if (enc_kind_ == "ordered") {
    state_dim_ = max_stps_ * stp_dim_ + obs_dim_;
  } else {
    enc::Feature ghost = normalize_with(ghost_feature_raw(norm_, cfg.scenario), norm_.stp_lo,
                                        norm_.stp_hi);
    encoder_ = enc::EncoderSpec::make(stp_dim_, cfg.encoder.d3, cfg.encoder.h_hidden,
                                      cfg.encoder.attn_hidden, std::move(ghost));
    state_dim_ = cfg.encoder.d3 + obs_dim_;
  }

  std::vector<int> pw{state_dim_};
  pw.insert(pw.end(), cfg.trainer.policy_widths.begin(), cfg.trainer.policy_widths.end());
  pw.push_back(act_dim_);
  policy_ = nn::MlpSpec::make(std::move(pw), nn::Act::Tanh, nn::Act::Linear, nn::OutKind::Bounded,
                              {env.action_low().begin(), env.action_low().end()},
                              {env.action_high().begin(), env.action_high().end()});

  std::vector<int> cw{state_dim_ + act_dim_};
  cw.insert(cw.end(), cfg.trainer.critic_widths.begin(), cfg.trainer.critic_widths.end());
  cw.push_back(1);
  critic_ = nn::MlpSpec::make(std::move(cw), nn::Act::Tanh, nn::Act::Linear);

  if (has_encoder_params()) params_.add_slice("phi", encoder_.param_count());
  params_.add_slice("theta", policy_.param_count());
  for (Critic q : {Critic::R1, Critic::R2, Critic::C1, Critic::C2})
    params_.add_slice(critic_slice_name(q, false), critic_.param_count());
  if (has_encoder_params()) params_.add_slice("phi_t", encoder_.param_count());
  params_.add_slice("theta_t", policy_.param_count());
  for (Critic q : {Critic::R1, Critic::R2, Critic::C1, Critic::C2})
    params_.add_slice(critic_slice_name(q, true), critic_.param_count());
}

void Agent::init(uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x1217);
  if (has_encoder_params()) encoder_.init(params_.slice("phi"), rng);
  nn::mlp_init(policy_, params_.slice("theta"), rng);
  for (Critic q : {Critic::R1, Critic::R2, Critic::C1, Critic::C2})
    nn::mlp_init(critic_, params_.slice(critic_slice_name(q, false)), rng);
  copy_to_targets();
}

void Agent::copy_to_targets() {
  if (has_encoder_params()) params_.copy_slice("phi_t", "phi");
  params_.copy_slice("theta_t", "theta");
  for (Critic q : {Critic::R1, Critic::R2, Critic::C1, Critic::C2})
    params_.copy_slice(critic_slice_name(q, true), critic_slice_name(q, false));
}

void Agent::soft_update_targets(double tau) {
  if (has_encoder_params()) params_.soft_update("phi_t", "phi", tau);
  params_.soft_update("theta_t", "theta", tau);
  for (Critic q : {Critic::R1, Critic::R2, Critic::C1, Critic::C2})
    params_.soft_update(critic_slice_name(q, true), critic_slice_name(q, false), tau);
}

std::vector<double> Agent::normalize_x(std::span<const double> raw) const {
  return normalize_with(raw, norm_.x_lo, norm_.x_hi);
}

std::vector<double> Agent::normalize_stp(std::span<const double> raw) const {
  return normalize_with(raw, norm_.stp_lo, norm_.stp_hi);
}

ad::Var Agent::normalize_x_tape(ad::Tape& t, ad::Var raw) const {
  return normalize_tape_with(t, raw, norm_.x_lo, norm_.x_hi);
}

ad::Var Agent::normalize_stp_tape(ad::Tape& t, ad::Var raw) const {
  return normalize_tape_with(t, raw, norm_.stp_lo, norm_.stp_hi);
}

std::vector<double> Agent::encode_plain(const Observation& obs, bool target,
                                        std::vector<double>* attn) const {
  if (attn) attn->clear();
  const std::vector<double> xn = normalize_x(obs.x);
  enc::FeatureSet fs;
  fs.reserve(obs.stps.size());
  for (const std::vector<double>& f : obs.stps) fs.push_back(normalize_stp(f));

  if (enc_kind_ == "ordered") {
    if (fs.empty()) {
      std::vector<double> s(size_t(max_stps_ * stp_dim_), 0.0);
      s.insert(s.end(), xn.begin(), xn.end());
      return s;
    }
    return enc::encode_ordered(fs, xn, max_stps_);
  }
  const std::span<const double> phi = params_.slice(target ? "phi_t" : "phi");
  if (enc_kind_ == "esc") return enc::encode_esc_plain(encoder_, phi, fs, xn);
  return enc::encode_abe_plain(encoder_, phi, fs, xn, attn);
}

std::vector<double> Agent::policy_plain(std::span<const double> state, bool target) const {
  std::vector<double> a(size_t(act_dim_), 0.0);
  nn::mlp_eval(policy_, params_.slice(target ? "theta_t" : "theta"), state, a);
  return a;
}

std::vector<double> Agent::act_plain(const Observation& obs, bool target) const {
  return policy_plain(encode_plain(obs, target), target);
}

double Agent::q_plain(Critic q, bool target, std::span<const double> state,
                      std::span<const double> action) const {
  std::vector<double> in(state.begin(), state.end());
  in.insert(in.end(), action.begin(), action.end());
  double out = 0.0;
  nn::mlp_eval(critic_, params_.slice(critic_slice_name(q, target)), in,
               std::span<double>(&out, 1));
  return out;
}

ad::Var Agent::state_tape(ad::Tape& t, const enc::EncoderVars* vars,
                          std::span<const ad::Var> members_n, ad::Var x_n,
                          ad::Var* attn_out) const {
  if (attn_out) *attn_out = ad::Var{};
  if (enc_kind_ == "ordered") {
    // Mirror of the fixed-slot ordering: ascending distance from the first
    // two feature components, computed from forward values.
    std::vector<int> order(members_n.size());
    for (size_t j = 0; j < members_n.size(); ++j) order[j] = int(j);
    auto dist = [&](int j) {
      const std::span<const double> v = t.value(members_n[size_t(j)]);
      return std::hypot(v[0], v[1]);
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = dist(a), db = dist(b);
      if (da != db) return da < db;
      return t.value(members_n[size_t(a)])[0] < t.value(members_n[size_t(b)])[0];
    });
    const std::vector<double> zeros(size_t(stp_dim_), 0.0);
    std::vector<ad::Var> parts;
    for (int slot = 0; slot < max_stps_; ++slot) {
      if (slot < int(order.size()))
        parts.push_back(members_n[size_t(order[size_t(slot)])]);
      else
        parts.push_back(t.constant(zeros));
    }
    parts.push_back(x_n);
    return t.concat(parts);
  }
  if (vars == nullptr) throw UsageError("Agent::state_tape: encoder weights not bound");
  if (enc_kind_ == "esc") return enc::encode_esc_tape(t, encoder_, *vars, members_n, x_n).s;
  const enc::SetEncoding se = enc::encode_abe_tape(t, encoder_, *vars, members_n, x_n);
  if (attn_out) *attn_out = se.weights;
  return se.s;
}

}  // namespace cmpg
