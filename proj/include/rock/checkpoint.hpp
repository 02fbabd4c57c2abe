#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rock/errors.hpp"
#include "rock/policy.hpp"
#include "rock/quantized.hpp"

namespace rock {

inline constexpr std::string_view kPolicyMagic = "ROCKPOL1";
inline constexpr std::string_view kQuantizedMagic = "ROCKQNT1";

/// 64-bit FNV-1a, used to tag checkpoints with the config that produced them.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf_.insert(buf_.end(), b, b + sizeof(T));
  }

  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptedModel("checkpoint: truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void check_dims(std::uint32_t rows, std::uint32_t cols) {
  if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16)) {
    throw CorruptedModel("checkpoint: implausible layer shape");
  }
}

inline Activation read_activation(ByteReader& r) {
  const auto id = r.get<std::uint32_t>();
  if (!valid_activation(id)) throw CorruptedModel("checkpoint: unknown activation id");
  return static_cast<Activation>(id);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

inline std::string serialize_policy(const PolicyNet& p) {
  detail::ByteWriter w;
  w.raw(kPolicyMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.num_layers()));
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.out_width(k)));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.in_width(k)));
    for (float x : p.weights(k)) w.put<float>(x);
    for (float x : p.biases(k)) w.put<float>(x);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.hidden_activation()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.output_activation()));
  return w.bytes();
}

inline PolicyNet deserialize_policy(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(kPolicyMagic.size()) != kPolicyMagic) throw CorruptedModel("checkpoint: bad magic");
  const auto n = r.get<std::uint32_t>();
  if (n == 0 || n > 64) throw CorruptedModel("checkpoint: implausible layer count");
  std::vector<int> widths;
  std::vector<std::vector<float>> w(n), b(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
    detail::check_dims(rows, cols);
    if (k == 0) widths.push_back(static_cast<int>(cols));
    else if (static_cast<int>(cols) != widths.back()) throw CorruptedModel("checkpoint: width mismatch");
    widths.push_back(static_cast<int>(rows));
    w[k].resize(static_cast<std::size_t>(rows) * cols);
    for (float& x : w[k]) x = r.get<float>();
    b[k].resize(rows);
    for (float& x : b[k]) x = r.get<float>();
  }
  const Activation hidden = detail::read_activation(r);
  const Activation output = detail::read_activation(r);
  if (!r.done()) throw CorruptedModel("checkpoint: trailing bytes");
  PolicyNet p(widths, hidden, output);
  for (std::uint32_t k = 0; k < n; ++k) {
    std::copy(w[k].begin(), w[k].end(), p.weights(k).begin());
    std::copy(b[k].begin(), b[k].end(), p.biases(k).begin());
  }
  if (!p.all_finite()) throw CorruptedModel("checkpoint: non-finite parameter");
  return p;
}

inline std::string serialize_quantized(const QuantizedPolicy& q) {
  detail::ByteWriter w;
  w.raw(kQuantizedMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(q.layers().size()));
  for (const QuantizedLayer& L : q.layers()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.cols));
    for (std::int8_t x : L.weights) w.put<std::int8_t>(x);
    for (std::int32_t x : L.bias) w.put<std::int32_t>(x);
    w.put<float>(L.weight_scale);
    w.put<float>(L.input_scale);
    w.put<std::int32_t>(L.input_zero_point);
    w.put<float>(L.preact_scale);
    w.put<float>(L.output_scale);
    w.put<std::int32_t>(L.output_zero_point);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(q.hidden_activation()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(q.output_activation()));
  return w.bytes();
}

inline QuantizedPolicy deserialize_quantized(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(kQuantizedMagic.size()) != kQuantizedMagic) throw CorruptedModel("checkpoint: bad magic");
  const auto n = r.get<std::uint32_t>();
  if (n == 0 || n > 64) throw CorruptedModel("checkpoint: implausible layer count");
  std::vector<QuantizedLayer> layers(n);
  for (QuantizedLayer& L : layers) {
    const auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
    detail::check_dims(rows, cols);
    L.rows = static_cast<int>(rows);
    L.cols = static_cast<int>(cols);
    L.weights.resize(static_cast<std::size_t>(rows) * cols);
    for (auto& x : L.weights) x = r.get<std::int8_t>();
    L.bias.resize(rows);
    for (auto& x : L.bias) x = r.get<std::int32_t>();
    L.weight_scale = r.get<float>();
    L.input_scale = r.get<float>();
    L.input_zero_point = r.get<std::int32_t>();
    L.preact_scale = r.get<float>();
    L.output_scale = r.get<float>();
    L.output_zero_point = r.get<std::int32_t>();
  }
  const Activation hidden = detail::read_activation(r);
  const Activation output = detail::read_activation(r);
  if (!r.done()) throw CorruptedModel("checkpoint: trailing bytes");
  return QuantizedPolicy(std::move(layers), hidden, output);
}

/// Sidecar written next to every checkpoint as `<path>.meta`.
struct CheckpointMeta {
  std::string format;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::string> extra;
};

inline std::string sidecar_path(const std::string& path) { return path + ".meta"; }

inline void write_sidecar(const std::string& path, const CheckpointMeta& m) {
  std::ostringstream ss;
  ss << "format=" << m.format << "\n";
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(m.config_hash));
  ss << "config_hash=" << hex << "\n";
  for (const auto& [k, v] : m.extra) ss << k << "=" << v << "\n";
  detail::write_file(sidecar_path(path), ss.str());
}

inline CheckpointMeta read_sidecar(const std::string& path) {
  std::istringstream ss(detail::read_file(sidecar_path(path)));
  CheckpointMeta m;
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "format") m.format = v;
    else if (k == "config_hash") m.config_hash = std::stoull(v, nullptr, 16);
    else m.extra[k] = v;
  }
  return m;
}

inline void save_policy(const std::string& path, const PolicyNet& p,
                        std::uint64_t config_hash = 0) {
  detail::write_file(path, serialize_policy(p));
  std::string widths;
  for (int w : p.widths()) widths += (widths.empty() ? "" : ",") + std::to_string(w);
  write_sidecar(path, {std::string(kPolicyMagic), config_hash, {{"widths", widths}}});
}

inline PolicyNet load_policy(const std::string& path) {
  return deserialize_policy(detail::read_file(path));
}

inline void save_quantized(const std::string& path, const QuantizedPolicy& q,
                           std::uint64_t config_hash = 0) {
  detail::write_file(path, serialize_quantized(q));
  write_sidecar(path, {std::string(kQuantizedMagic), config_hash, {}});
}

inline QuantizedPolicy load_quantized(const std::string& path) {
  return deserialize_quantized(detail::read_file(path));
}

}  // namespace rock
