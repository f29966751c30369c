#pragma once

#include <string>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/mlp.hpp"
#include "cmpg/params.hpp"
#include "cmpg/set_encoding.hpp"
#include "cmpg/world.hpp"

namespace cmpg {

// Critic identities within the twin reward/cost ensemble.
enum class Critic { R1, R2, C1, C2 };
const char* critic_slice_name(Critic q, bool target);

// Everything trainable wired to one flat parameter vector: set encoder (phi),
// policy (theta), four critics, and a target copy of each. Owns the
// normalization table and the tape-free evaluation paths used for rollout
// collection, evaluation, and critic targets; gradient ops rebuild the same
// pipelines on tape via the exposed specs and offsets.
class Agent {
 public:
  Agent(const FullConfig& cfg, const Env& env);

  void init(uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  int stp_dim() const { return stp_dim_; }
  int act_dim() const { return act_dim_; }
  int max_stps() const { return max_stps_; }
  int state_dim() const { return state_dim_; }
  bool has_encoder_params() const { return enc_kind_ != "ordered"; }
  const std::string& enc_kind() const { return enc_kind_; }

  const enc::EncoderSpec& encoder_spec() const { return encoder_; }
  const nn::MlpSpec& policy_spec() const { return policy_; }
  const nn::MlpSpec& critic_spec() const { return critic_; }
  const NormTable& norm() const { return norm_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Raw-to-normalized, in doubles (data path) and on tape (model path).
  // Both run the identical per-element expression, so values agree bitwise.
  std::vector<double> normalize_x(std::span<const double> raw) const;
  std::vector<double> normalize_stp(std::span<const double> raw) const;
  ad::Var normalize_x_tape(ad::Tape& t, ad::Var raw) const;
  ad::Var normalize_stp_tape(ad::Tape& t, ad::Var raw) const;

  // Encoded state s from a raw observation; attention weights optional
  // (empty for non-ABE encoders).
  std::vector<double> encode_plain(const Observation& obs, bool target,
                                   std::vector<double>* attn = nullptr) const;
  // Policy action at a raw observation (no exploration noise).
  std::vector<double> act_plain(const Observation& obs, bool target) const;
  std::vector<double> policy_plain(std::span<const double> state, bool target) const;
  double q_plain(Critic q, bool target, std::span<const double> state,
                 std::span<const double> action) const;

  // Normalized member vars + normalized x var -> encoded state on tape.
  // `vars` are the bound encoder weights (ignored for the ordered encoder);
  // attention weights are written to *attn_out when requested and available.
  ad::Var state_tape(ad::Tape& t, const enc::EncoderVars* vars,
                     std::span<const ad::Var> members_n, ad::Var x_n,
                     ad::Var* attn_out = nullptr) const;

  void soft_update_targets(double tau);
  void copy_to_targets();

 private:
  int obs_dim_, stp_dim_, act_dim_, max_stps_, state_dim_ = 0;
  std::string enc_kind_;
  NormTable norm_;
  enc::EncoderSpec encoder_;
  nn::MlpSpec policy_, critic_;
  ParameterSet params_;
};

}  // namespace cmpg
