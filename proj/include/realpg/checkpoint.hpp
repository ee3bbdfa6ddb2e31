#pragma once

// Binary checkpoint, all fields little-endian:
//   "REALPG1" (7 bytes) | u32 format version
//   u32 vocab_size | u32 prompt_dim | u32 cot_length | f64 temperature | u8 renormalize_digits
//   u8 optimizer kind | u64 optimizer t | u64 moment length | f64[len] m | f64[len] v
//   u64 step | u64 param count | f64[count] params (W row-major, then b)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "realpg/errors.hpp"
#include "realpg/optimizer.hpp"
#include "realpg/policy.hpp"

namespace realpg {

struct Checkpoint {
  static constexpr std::string_view kMagic = "REALPG1";
  static constexpr std::uint32_t kVersion = 1;

  PolicyConfig policy;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  ParamVector params;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class T>
  void le(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    bytes(raw.data(), raw.size());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}
  void bytes(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) throw CompatibilityError("checkpoint is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T le() {
    std::array<char, sizeof(T)> raw;
    bytes(raw.data(), raw.size());
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline void write_doubles(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.le(x);
}

inline std::vector<double> read_doubles(ByteReader& r, std::uint64_t n) {
  if (n > r.remaining() / sizeof(double)) throw CompatibilityError("checkpoint is truncated");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = r.le<double>();
  return v;
}

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.bytes(Checkpoint::kMagic.data(), Checkpoint::kMagic.size());
  w.le(Checkpoint::kVersion);
  w.le(static_cast<std::uint32_t>(ck.policy.vocab.vocab_size));
  w.le(static_cast<std::uint32_t>(ck.policy.prompt_dim));
  w.le(static_cast<std::uint32_t>(ck.policy.cot_length));
  w.le(ck.policy.temperature);
  w.le(static_cast<std::uint8_t>(ck.policy.renormalize_digits));
  w.le(static_cast<std::uint8_t>(ck.optimizer.kind));
  w.le(ck.optimizer.t);
  w.le(static_cast<std::uint64_t>(ck.optimizer.m.size()));
  detail::write_doubles(w, ck.optimizer.m);
  detail::write_doubles(w, ck.optimizer.v);
  w.le(ck.step);
  w.le(static_cast<std::uint64_t>(ck.params.size()));
  detail::write_doubles(w, ck.params);
  return w.data();
}

inline Checkpoint deserialize_checkpoint(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  std::array<char, Checkpoint::kMagic.size()> magic;
  r.bytes(magic.data(), magic.size());
  if (std::string_view(magic.data(), magic.size()) != Checkpoint::kMagic)
    throw CompatibilityError("not a checkpoint (bad magic)");
  if (const auto version = r.le<std::uint32_t>(); version != Checkpoint::kVersion)
    throw CompatibilityError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.policy.vocab.vocab_size = static_cast<int>(r.le<std::uint32_t>());
  ck.policy.prompt_dim = static_cast<int>(r.le<std::uint32_t>());
  ck.policy.cot_length = static_cast<int>(r.le<std::uint32_t>());
  ck.policy.temperature = r.le<double>();
  ck.policy.renormalize_digits = r.le<std::uint8_t>() != 0;
  const auto kind = r.le<std::uint8_t>();
  if (kind > 1) throw CompatibilityError("unknown optimizer kind in checkpoint");
  ck.optimizer.kind = static_cast<OptimizerKind>(kind);
  ck.optimizer.t = r.le<std::uint64_t>();
  const auto moments = r.le<std::uint64_t>();
  ck.optimizer.m = detail::read_doubles(r, moments);
  ck.optimizer.v = detail::read_doubles(r, moments);
  ck.step = r.le<std::uint64_t>();
  const auto count = r.le<std::uint64_t>();
  ck.params = detail::read_doubles(r, count);
  if (r.remaining() != 0) throw CompatibilityError("trailing bytes after checkpoint");
  try {
    ck.policy.validate();
  } catch (const ConfigError& e) {
    throw CompatibilityError(std::string("checkpoint policy config invalid: ") + e.what());
  }
  if (ck.params.size() != ck.policy.param_count())
    throw CompatibilityError("checkpoint parameter count does not match its policy config");
  if (ck.optimizer.kind == OptimizerKind::adam && moments != count)
    throw CompatibilityError("checkpoint optimizer moments do not match parameter count");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CompatibilityError("cannot open checkpoint " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(bytes));
}

/// Throws CompatibilityError unless the checkpoint's dimensions match `expected`.
inline void require_compatible(const Checkpoint& ck, const PolicyConfig& expected) {
  if (ck.policy.vocab.vocab_size != expected.vocab.vocab_size ||
      ck.policy.prompt_dim != expected.prompt_dim || ck.policy.cot_length != expected.cot_length)
    throw CompatibilityError(
        "checkpoint dimensions (V=" + std::to_string(ck.policy.vocab.vocab_size) +
        ", d=" + std::to_string(ck.policy.prompt_dim) + ", L=" + std::to_string(ck.policy.cot_length) +
        ") do not match configuration (V=" + std::to_string(expected.vocab.vocab_size) +
        ", d=" + std::to_string(expected.prompt_dim) + ", L=" + std::to_string(expected.cot_length) + ")");
}

}  // namespace realpg
