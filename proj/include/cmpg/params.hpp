#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cmpg {

// Flat trainable parameter vector with named sub-slices (policy, encoder,
// critics, targets). Offsets are fixed once registered.
class ParameterSet {
 public:
  struct Slice {
    std::string name;
    int offset = 0;
    int count = 0;
  };

  int add_slice(const std::string& name, int count);
  bool has(const std::string& name) const;
  const Slice& info(const std::string& name) const;
  std::span<double> slice(const std::string& name);
  std::span<const double> slice(const std::string& name) const;
  int offset_of(const std::string& name) const { return info(name).offset; }

  int size() const { return int(data_.size()); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<Slice>& slices() const { return slices_; }

  // target <- (1 - tau) * target + tau * source, over two same-sized slices.
  void soft_update(const std::string& target, const std::string& source, double tau);
  void copy_slice(const std::string& dst, const std::string& src);

 private:
  std::vector<Slice> slices_;
  std::vector<double> data_;
};

// Named sections of 64-bit reals, written little-endian. Round-trips
// bit-exactly. Layout: "CMPG" magic, u32 version, then per section:
// u32 name length, name bytes, u64 count, count doubles.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;
  uint32_t version = kVersion;
  std::vector<std::pair<std::string, std::vector<double>>> sections;

  void add(const std::string& name, std::vector<double> values);
  const std::vector<double>* find(const std::string& name) const;
  const std::vector<double>& require(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace cmpg
