#pragma once

#include <span>
#include <vector>

#include "cmpg/rng.hpp"
#include "cmpg/tape.hpp"

namespace cmpg::nn {

enum class Act { Tanh, Relu, Linear };
enum class OutKind { Identity, Bounded, Softmax };

// Fully connected net. widths = [in, h1, ..., out]; acts has one entry per
// layer. The output transform is applied after the last layer's activation:
// Bounded maps through tanh onto [lo, hi] per output dimension.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Act> acts;
  OutKind out = OutKind::Identity;
  std::vector<double> out_lo, out_hi;

  int layers() const { return int(widths.size()) - 1; }
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  int param_count() const;
  void validate() const;

  static MlpSpec make(std::vector<int> widths, Act hidden, Act last,
                      OutKind out = OutKind::Identity,
                      std::vector<double> lo = {}, std::vector<double> hi = {});
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases.
void mlp_init(const MlpSpec& spec, std::span<double> params, Rng& rng);

// Weight/bias vars of one net bound onto a tape. Binding once and applying
// many times keeps multi-step rollout tapes small.
struct MlpVars {
  std::vector<ad::Var> w, b;
};

// Puts the net's weights on the tape. `params` is the spec's flat slice;
// when trainable, each weight/bias leaf is bound to global_offset + its
// position inside the slice, so backward() lands gradients at the right
// place in the flat parameter vector. When not trainable the parameters
// enter as constants (frozen).
MlpVars mlp_bind(ad::Tape& tape, const MlpSpec& spec,
                 std::span<const double> params, int global_offset,
                 bool trainable);

// Records one forward pass through already-bound weights.
ad::Var mlp_apply(ad::Tape& tape, const MlpSpec& spec, const MlpVars& vars,
                  ad::Var input);

inline ad::Var mlp_forward(ad::Tape& tape, const MlpSpec& spec,
                           std::span<const double> params, int global_offset,
                           ad::Var input, bool trainable) {
  return mlp_apply(tape, spec, mlp_bind(tape, spec, params, global_offset, trainable), input);
}

// Plain evaluation without a tape, for rollout collection and eval.
void mlp_eval(const MlpSpec& spec, std::span<const double> params,
              std::span<const double> input, std::span<double> output);

}  // namespace cmpg::nn
