#include "cmpg/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cmpg/errors.hpp"

namespace cmpg {

int ParameterSet::add_slice(const std::string& name, int count) {
  if (count <= 0) throw ConfigError("ParameterSet: slice '" + name + "' has non-positive size");
  if (has(name)) throw ConfigError("ParameterSet: duplicate slice '" + name + "'");
  Slice s{name, int(data_.size()), count};
  slices_.push_back(s);
  data_.resize(data_.size() + size_t(count), 0.0);
  return s.offset;
}

bool ParameterSet::has(const std::string& name) const {
  for (const Slice& s : slices_)
    if (s.name == name) return true;
  return false;
}

const ParameterSet::Slice& ParameterSet::info(const std::string& name) const {
  for (const Slice& s : slices_)
    if (s.name == name) return s;
  throw ConfigError("ParameterSet: unknown slice '" + name + "'");
}

std::span<double> ParameterSet::slice(const std::string& name) {
  const Slice& s = info(name);
  return {data_.data() + s.offset, size_t(s.count)};
}

std::span<const double> ParameterSet::slice(const std::string& name) const {
  const Slice& s = info(name);
  return {data_.data() + s.offset, size_t(s.count)};
}

void ParameterSet::soft_update(const std::string& target, const std::string& source, double tau) {
  std::span<double> t = slice(target);
  std::span<const double> s = slice(source);
  if (t.size() != s.size())
    throw ConfigError("soft_update: slice layouts differ (" + target + " vs " + source + ")");
  for (size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - tau) * t[k] + tau * s[k];
}

void ParameterSet::copy_slice(const std::string& dst, const std::string& src) {
  std::span<double> d = slice(dst);
  std::span<const double> s = slice(src);
  if (d.size() != s.size())
    throw ConfigError("copy_slice: slice layouts differ (" + dst + " vs " + src + ")");
  std::memcpy(d.data(), s.data(), s.size() * sizeof(double));
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, std::vector<double> values) {
  sections.emplace_back(name, std::move(values));
}

const std::vector<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, v] : sections)
    if (n == name) return &v;
  return nullptr;
}

const std::vector<double>& Checkpoint::require(const std::string& name) const {
  const std::vector<double>* v = find(name);
  if (!v) throw ConfigError("checkpoint: missing section '" + name + "'");
  return *v;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  os.write("CMPG", 4);
  put_u32(os, version);
  for (const auto& [name, vals] : sections) {
    put_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    put_u64(os, uint64_t(vals.size()));
    for (double x : vals) put_u64(os, std::bit_cast<uint64_t>(x));
  }
  if (!os) throw ConfigError("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CMPG", 4) != 0)
    throw ConfigError("checkpoint: bad magic in '" + path + "'");
  Checkpoint ck;
  ck.version = get_u32(is);
  if (ck.version != kVersion)
    throw ConfigError("checkpoint: unsupported format version in '" + path + "'");
  while (true) {
    uint32_t nlen = get_u32(is);
    if (is.eof()) break;
    if (!is || nlen > (1u << 20)) throw ConfigError("checkpoint: corrupt section name in '" + path + "'");
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    uint64_t count = get_u64(is);
    if (!is || count > (1ull << 32)) throw ConfigError("checkpoint: corrupt section size in '" + path + "'");
    std::vector<double> vals(size_t(count), 0.0);
    for (uint64_t k = 0; k < count; ++k) vals[size_t(k)] = std::bit_cast<double>(get_u64(is));
    if (!is) throw ConfigError("checkpoint: truncated section '" + name + "' in '" + path + "'");
    ck.sections.emplace_back(std::move(name), std::move(vals));
  }
  return ck;
}

}  // namespace cmpg
