#pragma once

#include <span>
#include <string>
#include <vector>

#include "cmpg/mlp.hpp"
#include "cmpg/rng.hpp"
#include "cmpg/tape.hpp"

namespace cmpg::enc {

using Feature = std::vector<double>;
using FeatureSet = std::vector<Feature>;

// Embedding net h: d2 -> d3 and attention net attn: 2*d3 -> 1 forming one
// parameter slice (h first, attn after). When the surrounding set is empty
// the encoders substitute `virtual_far`, a stand-in participant parked at
// the far edge of perception with zero velocity, so encoding stays total.
struct EncoderSpec {
  nn::MlpSpec h;
  nn::MlpSpec attn;
  Feature virtual_far;

  int d2() const { return h.in_dim(); }
  int d3() const { return h.out_dim(); }
  int param_count() const { return h.param_count() + attn.param_count(); }
  void init(std::span<double> params, Rng& rng) const;

  static EncoderSpec make(int d2, int d3, int h_hidden, int attn_hidden,
                          Feature virtual_far = {});
};

// Encoder weights bound onto one tape, reusable across rollout steps.
struct EncoderVars {
  nn::MlpVars h, attn;
};
EncoderVars encoder_bind(ad::Tape& tape, const EncoderSpec& spec,
                         std::span<const double> params, int global_offset,
                         bool trainable);

struct SetEncoding {
  ad::Var s;        // [pooled embedding ; x], length d3 + d1
  ad::Var weights;  // attention weights, length M (invalid for the sum encoder)
};

// Attention-weighted pooling: e_j = h(x_j), q = mean(e), logits_j =
// attn([e_j ; q]), w = softmax(logits), s = [sum_j w_j e_j ; x]. Members may
// be any d2-length vars (constants for replayed data, model state for BPTT).
SetEncoding encode_abe_tape(ad::Tape& tape, const EncoderSpec& spec,
                            const EncoderVars& vars,
                            std::span<const ad::Var> members, ad::Var x);

// Unweighted sum pooling: s = [sum_j h(x_j) ; x].
SetEncoding encode_esc_tape(ad::Tape& tape, const EncoderSpec& spec,
                            const EncoderVars& vars,
                            std::span<const ad::Var> members, ad::Var x);

// Tape-free paths for rollout collection and evaluation.
std::vector<double> encode_abe_plain(const EncoderSpec& spec,
                                     std::span<const double> params,
                                     const FeatureSet& set,
                                     std::span<const double> x,
                                     std::vector<double>* weights_out = nullptr);
std::vector<double> encode_esc_plain(const EncoderSpec& spec,
                                     std::span<const double> params,
                                     const FeatureSet& set,
                                     std::span<const double> x);

// Fixed-slot baseline: features sorted ascending by distance-to-ego (hypot of
// components pos_ix, pos_iy; ties by component pos_ix), truncated/zero-padded
// to max_count slots, then x appended.
std::vector<double> encode_ordered(const FeatureSet& set, std::span<const double> x,
                                   int max_count, int pos_ix = 0, int pos_iy = 1);

// --- injectivity oracles ---------------------------------------------------

// Normalized power sums of a bounded multiset: component k (k = 0..n) is
// sum_i ((x_i - lb) / (hb - lb))^k; component 0 equals the multiset size.
std::vector<double> sum_of_power(std::span<const double> x, double lb, double hb, int n);

// Per-coordinate power-sum blocks plus the set size:
// [E(y_1); ...; E(y_m); M] where y_i collects the i-th coordinate of every
// member. Retains exactly the per-coordinate multisets, so sets related by
// swapping feature values between members map to the same output.
std::vector<double> dyn_set_map(const FeatureSet& set, double lb, double hb, int n);

// The existence construction behind attention-pooling injectivity: member
// embeddings h(x_j) scaled by 1/w_j whose w-weighted sum reproduces
// dyn_set_map(set) exactly. Requires all w_j > 0.
FeatureSet constructed_h(const FeatureSet& set, double lb, double hb, int n,
                         std::span<const double> w);

// Canonical label of a set's swap-equivalence class: the per-coordinate
// sorted value lists plus the set size.
std::string swap_class_key(const FeatureSet& set);

struct InjectivityReport {
  std::string mapping;         // "sum_of_power" or "dyn_set_map"
  int grid_points = 0;         // grid values per coordinate
  int m = 0;                   // vector length (1 for sum_of_power)
  int max_set_size = 0;
  int degree = 0;              // n
  long num_sets = 0;
  long num_classes = 0;
  double min_between_class = 0.0;  // L-inf over class representative pairs
  double max_within_class = 0.0;   // L-inf within each class (expect 0)
  bool pass = false;

  std::string to_json() const;
  std::string summary() const;
};

// Exhaustively enumerates multisets of scalar values (sizes 0..max_size)
// over the grid and checks that distinct multisets give distinct outputs.
InjectivityReport certify_sum_of_power(std::span<const double> grid, int max_size,
                                       double lb, double hb, int n);

// Exhaustively enumerates multisets (sizes 1..max_size) of vectors over
// grid^m and checks that distinct swap-equivalence classes give distinct
// outputs while members of one class coincide.
InjectivityReport certify_dyn_set_map(std::span<const double> grid, int m,
                                      int max_size, double lb, double hb, int n);

// Embedding width needed to carry the full dyn_set_map information for sets
// up to `capacity` members with d2 features each.
inline int injective_d3_lower_bound(int capacity, int d2) { return capacity * d2 + 1; }

}  // namespace cmpg::enc
