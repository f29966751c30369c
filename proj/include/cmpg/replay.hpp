#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cmpg/rng.hpp"
#include "cmpg/world.hpp"

namespace cmpg {

// FIFO ring of transitions in one flat double array. STP rows are stored
// zero-padded to max_stps with an explicit count, so a transition's stride
// is fixed and sampling is pointer arithmetic.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, int obs_dim, int stp_dim, int max_stps, int act_dim, int ms_dim);

  void push(const Observation& obs, std::span<const double> action, double r, double c, int d,
            const Observation& next_obs, std::span<const double> model_state);

  int size() const { return int(pushed_ < uint64_t(capacity_) ? pushed_ : uint64_t(capacity_)); }
  int capacity() const { return capacity_; }
  uint64_t pushed() const { return pushed_; }

  // Uniform index into [0, size()).
  int sample(Rng& rng) const;

  std::span<const double> x(int i) const { return field(i, off_x_, obs_dim_); }
  int stp_count(int i) const { return int(row(i)[size_t(off_count_)]); }
  std::span<const double> stp(int i, int k) const {
    return field(i, off_stps_ + k * stp_dim_, stp_dim_);
  }
  std::span<const double> action(int i) const { return field(i, off_act_, act_dim_); }
  double reward(int i) const { return row(i)[size_t(off_r_)]; }
  double cost(int i) const { return row(i)[size_t(off_r_) + 1]; }
  int done(int i) const { return int(row(i)[size_t(off_r_) + 2]); }
  std::span<const double> next_x(int i) const { return field(i, off_next_x_, obs_dim_); }
  int next_stp_count(int i) const { return int(row(i)[size_t(off_next_count_)]); }
  std::span<const double> next_stp(int i, int k) const {
    return field(i, off_next_stps_ + k * stp_dim_, stp_dim_);
  }
  std::span<const double> model_state(int i) const { return field(i, off_ms_, ms_dim_); }

  int obs_dim() const { return obs_dim_; }
  int stp_dim() const { return stp_dim_; }
  int max_stps() const { return max_stps_; }
  int act_dim() const { return act_dim_; }
  int ms_dim() const { return ms_dim_; }

  // Checkpoint payload: dims header, push counter, then the used region of
  // the ring verbatim. restore() requires identical dimensions.
  std::vector<double> serialize() const;
  void restore(std::span<const double> payload);

 private:
  const double* row(int i) const;
  std::span<const double> field(int i, int off, int len) const {
    return {row(i) + off, size_t(len)};
  }

  int capacity_, obs_dim_, stp_dim_, max_stps_, act_dim_, ms_dim_;
  int off_x_, off_count_, off_stps_, off_act_, off_r_, off_next_x_, off_next_count_,
      off_next_stps_, off_ms_, stride_;
  uint64_t pushed_ = 0;
  std::vector<double> data_;
};

}  // namespace cmpg
