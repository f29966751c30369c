#include "cmpg/replay.hpp"

#include <algorithm>
#include <cstring>

#include "cmpg/errors.hpp"

namespace cmpg {

ReplayBuffer::ReplayBuffer(int capacity, int obs_dim, int stp_dim, int max_stps, int act_dim,
                           int ms_dim)
    : capacity_(capacity), obs_dim_(obs_dim), stp_dim_(stp_dim), max_stps_(max_stps),
      act_dim_(act_dim), ms_dim_(ms_dim) {
  if (capacity <= 0) throw ConfigError("ReplayBuffer: capacity must be positive");
  if (obs_dim <= 0 || stp_dim <= 0 || max_stps < 0 || act_dim <= 0 || ms_dim <= 0)
    throw ConfigError("ReplayBuffer: non-positive dimension");
  off_x_ = 0;
  off_count_ = off_x_ + obs_dim_;
  off_stps_ = off_count_ + 1;
  off_act_ = off_stps_ + max_stps_ * stp_dim_;
  off_r_ = off_act_ + act_dim_;
  off_next_x_ = off_r_ + 3;
  off_next_count_ = off_next_x_ + obs_dim_;
  off_next_stps_ = off_next_count_ + 1;
  off_ms_ = off_next_stps_ + max_stps_ * stp_dim_;
  stride_ = off_ms_ + ms_dim_;
  data_.assign(size_t(capacity_) * size_t(stride_), 0.0);
}

const double* ReplayBuffer::row(int i) const {
  if (i < 0 || i >= size()) throw UsageError("ReplayBuffer: index out of range");
  return data_.data() + size_t(i) * size_t(stride_);
}

void ReplayBuffer::push(const Observation& obs, std::span<const double> action, double r, double c,
                        int d, const Observation& next_obs, std::span<const double> model_state) {
  if (int(obs.x.size()) != obs_dim_ || int(next_obs.x.size()) != obs_dim_)
    throw UsageError("ReplayBuffer::push: observation size mismatch");
  if (int(action.size()) != act_dim_) throw UsageError("ReplayBuffer::push: action size mismatch");
  if (int(model_state.size()) != ms_dim_)
    throw UsageError("ReplayBuffer::push: model-state size mismatch");
  if (int(obs.stps.size()) > max_stps_ || int(next_obs.stps.size()) > max_stps_)
    throw UsageError("ReplayBuffer::push: more STP rows than max_stps");

  double* w = data_.data() + size_t(pushed_ % uint64_t(capacity_)) * size_t(stride_);
  std::fill(w, w + stride_, 0.0);
  std::copy(obs.x.begin(), obs.x.end(), w + off_x_);
  w[off_count_] = double(obs.stps.size());
  for (size_t k = 0; k < obs.stps.size(); ++k) {
    if (int(obs.stps[k].size()) != stp_dim_)
      throw UsageError("ReplayBuffer::push: STP row size mismatch");
    std::copy(obs.stps[k].begin(), obs.stps[k].end(), w + off_stps_ + int(k) * stp_dim_);
  }
  std::copy(action.begin(), action.end(), w + off_act_);
  w[off_r_] = r;
  w[off_r_ + 1] = c;
  w[off_r_ + 2] = double(d);
  std::copy(next_obs.x.begin(), next_obs.x.end(), w + off_next_x_);
  w[off_next_count_] = double(next_obs.stps.size());
  for (size_t k = 0; k < next_obs.stps.size(); ++k) {
    if (int(next_obs.stps[k].size()) != stp_dim_)
      throw UsageError("ReplayBuffer::push: STP row size mismatch");
    std::copy(next_obs.stps[k].begin(), next_obs.stps[k].end(),
              w + off_next_stps_ + int(k) * stp_dim_);
  }
  std::copy(model_state.begin(), model_state.end(), w + off_ms_);
  ++pushed_;
}

int ReplayBuffer::sample(Rng& rng) const {
  if (size() == 0) throw UsageError("ReplayBuffer::sample: buffer is empty");
  return rng.uniform_int(size());
}

std::vector<double> ReplayBuffer::serialize() const {
  std::vector<double> out;
  out.reserve(7 + size_t(size()) * size_t(stride_));
  out.push_back(double(capacity_));
  out.push_back(double(obs_dim_));
  out.push_back(double(stp_dim_));
  out.push_back(double(max_stps_));
  out.push_back(double(act_dim_));
  out.push_back(double(ms_dim_));
  out.push_back(double(pushed_));
  out.insert(out.end(), data_.begin(), data_.begin() + ptrdiff_t(size_t(size()) * size_t(stride_)));
  return out;
}

void ReplayBuffer::restore(std::span<const double> payload) {
  if (payload.size() < 7) throw UsageError("ReplayBuffer::restore: truncated payload");
  const int dims[6] = {capacity_, obs_dim_, stp_dim_, max_stps_, act_dim_, ms_dim_};
  for (int i = 0; i < 6; ++i) {
    if (int(payload[size_t(i)]) != dims[i])
      throw UsageError("ReplayBuffer::restore: stored dimensions do not match this buffer");
  }
  pushed_ = uint64_t(payload[6]);
  const size_t used = size_t(size()) * size_t(stride_);
  if (payload.size() != 7 + used) throw UsageError("ReplayBuffer::restore: payload size mismatch");
  std::fill(data_.begin(), data_.end(), 0.0);
  std::copy(payload.begin() + 7, payload.end(), data_.begin());
}

}  // namespace cmpg
