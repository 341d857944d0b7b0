// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Dense and low-bit tensor containers, the model bundle and its on-disk
// container.
//
// Container layout (all integers little-endian):
//   "EALM"  u16 version=1  u32 tensor_count
//   per tensor: u16 name_len, name, u8 dtype, u8 rank, u64 dims[rank],
//               u64 payload_len, payload
//   u64 metadata_len, metadata (UTF-8 JSON)
//
// Payloads: f32 and f16 are raw little-endian values; i8 is one code byte per
// element followed by the f32 scales; i4 is the packed nibbles (see pack4)
// followed by the f32 scales. One scale means per-tensor, otherwise per-row.

#ifndef EALM_TENSORS_HPP_
#define EALM_TENSORS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/half.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/pack.hpp"

namespace ealm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Rows used for per-row scales and masks: leading dimension for rank >= 2.
inline std::size_t shape_rows(const Shape& shape) {
  return shape.size() >= 2 ? shape[0] : 1;
}

inline void validate_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) fail(ErrorKind::kShape, "zero dimension in shape " + shape_string(shape));
  }
}

/// Row-major 32-bit tensor.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    validate_shape(shape);
    if (data.size() != shape_numel(shape)) {
      fail(ErrorKind::kShape, "data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(shape));
    }
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(n, 0.0f));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const { return shape_rows(shape); }
  std::size_t cols() const { return rows() == 0 ? 0 : numel() / rows(); }

  float& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
  }

  /// Bit-exact comparison (distinguishes -0 from +0, equal NaN payloads match).
  bool bitwise_equal(const Tensor& o) const {
    return shape == o.shape && data.size() == o.data.size() &&
           (data.empty() ||
            std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0);
  }
};

/// binary16 storage; compute always widens back to float.
struct HalfTensor {
  Shape shape;
  std::vector<std::uint16_t> bits;

  std::size_t numel() const { return bits.size(); }
  bool operator==(const HalfTensor&) const = default;
};

/// Symmetric integer codes (one int8 per element in memory, packed on disk)
/// with one scale per tensor or per row.
struct QuantizedTensor {
  Shape shape;
  int bits = 8;  // 4 or 8
  std::vector<std::int8_t> codes;
  std::vector<float> scales;

  std::size_t numel() const { return codes.size(); }
  std::size_t rows() const { return shape_rows(shape); }
  std::size_t row_len() const { return numel() / rows(); }
  bool per_row() const { return scales.size() > 1; }
  int qmax() const { return bits == 4 ? 7 : 127; }
  float scale_for(std::size_t flat_index) const {
    return per_row() ? scales[flat_index / row_len()] : scales[0];
  }

  bool operator==(const QuantizedTensor& o) const {
    return shape == o.shape && bits == o.bits && codes == o.codes &&
           scales.size() == o.scales.size() &&
           (scales.empty() ||
            std::memcmp(scales.data(), o.scales.data(), scales.size() * sizeof(float)) == 0);
  }
};

using StoredTensor = std::variant<Tensor, HalfTensor, QuantizedTensor>;

enum class DType : std::uint8_t { kF32 = 0, kF16 = 1, kI8 = 2, kI4 = 3 };

inline DType dtype_of(const StoredTensor& t) {
  if (std::holds_alternative<Tensor>(t)) return DType::kF32;
  if (std::holds_alternative<HalfTensor>(t)) return DType::kF16;
  return std::get<QuantizedTensor>(t).bits == 4 ? DType::kI4 : DType::kI8;
}

inline int dtype_bits(DType d) {
  switch (d) {
    case DType::kF32: return 32;
    case DType::kF16: return 16;
    case DType::kI8: return 8;
    case DType::kI4: return 4;
  }
  return 0;
}

inline const Shape& shape_of(const StoredTensor& t) {
  return std::visit([](const auto& v) -> const Shape& { return v.shape; }, t);
}

inline std::size_t numel_of(const StoredTensor& t) {
  return std::visit([](const auto& v) { return v.numel(); }, t);
}

inline bool bitwise_equal(const StoredTensor& a, const StoredTensor& b) {
  if (a.index() != b.index()) return false;
  if (const auto* ta = std::get_if<Tensor>(&a)) return ta->bitwise_equal(std::get<Tensor>(b));
  if (const auto* ha = std::get_if<HalfTensor>(&a)) return *ha == std::get<HalfTensor>(b);
  return std::get<QuantizedTensor>(a) == std::get<QuantizedTensor>(b);
}

/// Widens any stored representation to a dense float tensor (codes times scale
/// for integer storage).
inline Tensor to_float(const StoredTensor& t) {
  if (const auto* dense = std::get_if<Tensor>(&t)) return *dense;
  if (const auto* half = std::get_if<HalfTensor>(&t)) {
    std::vector<float> data(half->bits.size());
    std::transform(half->bits.begin(), half->bits.end(), data.begin(), half_bits_to_float);
    return Tensor(half->shape, std::move(data));
  }
  const auto& q = std::get<QuantizedTensor>(t);
  std::vector<float> data(q.codes.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(q.codes[i]) * q.scale_for(i);
  }
  return Tensor(q.shape, std::move(data));
}

/// Stored payload size in bytes, scales included.
inline std::size_t payload_bytes(const StoredTensor& t) {
  switch (dtype_of(t)) {
    case DType::kF32: return numel_of(t) * 4;
    case DType::kF16: return numel_of(t) * 2;
    case DType::kI8: {
      const auto& q = std::get<QuantizedTensor>(t);
      return q.numel() + 4 * q.scales.size();
    }
    case DType::kI4: {
      const auto& q = std::get<QuantizedTensor>(t);
      return (q.numel() + 1) / 2 + 4 * q.scales.size();
    }
  }
  return 0;
}

/// Record of a pruning step as stored in bundle lineage.
struct PruneLineage {
  std::string method;  // "unstructured-magnitude" or "structured-nm"
  std::optional<double> ratio;
  std::optional<int> n;
  std::optional<int> m;
  std::string scope = "per-tensor";
  double sparsity = 0.0;

  bool operator==(const PruneLineage&) const = default;
};

struct Lineage {
  int precision_bits = 32;
  int epochs_trained = 0;
  std::optional<PruneLineage> prune;
  std::optional<std::string> parent_id;

  bool operator==(const Lineage&) const = default;
};

inline void to_json(nlohmann::json& j, const PruneLineage& p) {
  j = nlohmann::json{{"method", p.method}, {"scope", p.scope}, {"sparsity", p.sparsity}};
  j["ratio"] = p.ratio ? nlohmann::json(*p.ratio) : nlohmann::json(nullptr);
  j["n"] = p.n ? nlohmann::json(*p.n) : nlohmann::json(nullptr);
  j["m"] = p.m ? nlohmann::json(*p.m) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, PruneLineage& p) {
  p.method = j.at("method").get<std::string>();
  p.scope = j.value("scope", std::string("per-tensor"));
  p.sparsity = j.value("sparsity", 0.0);
  p.ratio = j.contains("ratio") && !j["ratio"].is_null() ? std::optional(j["ratio"].get<double>())
                                                         : std::nullopt;
  p.n = j.contains("n") && !j["n"].is_null() ? std::optional(j["n"].get<int>()) : std::nullopt;
  p.m = j.contains("m") && !j["m"].is_null() ? std::optional(j["m"].get<int>()) : std::nullopt;
}

inline void to_json(nlohmann::json& j, const Lineage& l) {
  j = nlohmann::json{{"precision_bits", l.precision_bits}, {"epochs_trained", l.epochs_trained}};
  j["prune"] = l.prune ? nlohmann::json(*l.prune) : nlohmann::json(nullptr);
  j["parent_id"] = l.parent_id ? nlohmann::json(*l.parent_id) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Lineage& l) {
  l.precision_bits = j.at("precision_bits").get<int>();
  l.epochs_trained = j.value("epochs_trained", 0);
  l.prune = j.contains("prune") && !j["prune"].is_null()
                ? std::optional(j["prune"].get<PruneLineage>())
                : std::nullopt;
  l.parent_id = j.contains("parent_id") && !j["parent_id"].is_null()
                    ? std::optional(j["parent_id"].get<std::string>())
                    : std::nullopt;
}

struct NamedTensor {
  std::string name;
  StoredTensor tensor;
};

/// Ordered collection of named tensors plus architecture and lineage. A
/// bundle without config is a plain tensor archive (no architecture checks).
struct ModelBundle {
  std::vector<NamedTensor> tensors;
  std::optional<LmConfig> config;
  Lineage lineage;

  const StoredTensor* find(std::string_view name) const {
    for (const auto& nt : tensors) {
      if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
  }

  StoredTensor* find(std::string_view name) {
    for (auto& nt : tensors) {
      if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
  }

  const StoredTensor& at(std::string_view name) const {
    const StoredTensor* t = find(name);
    if (!t) fail(ErrorKind::kInvariant, "bundle has no tensor '" + std::string(name) + "'");
    return *t;
  }

  StoredTensor& at(std::string_view name) {
    StoredTensor* t = find(name);
    if (!t) fail(ErrorKind::kInvariant, "bundle has no tensor '" + std::string(name) + "'");
    return *t;
  }

  void add(std::string name, StoredTensor tensor) {
    if (find(name)) fail(ErrorKind::kInvariant, "duplicate tensor name '" + name + "'");
    tensors.push_back({std::move(name), std::move(tensor)});
  }
};

/// Field-exact metadata and byte-exact payload equality.
inline bool bundles_equal(const ModelBundle& a, const ModelBundle& b) {
  if (a.config != b.config || !(a.lineage == b.lineage) || a.tensors.size() != b.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name) return false;
    if (!bitwise_equal(a.tensors[i].tensor, b.tensors[i].tensor)) return false;
  }
  return true;
}

inline std::size_t payload_bytes(const ModelBundle& bundle) {
  std::size_t total = 0;
  for (const auto& nt : bundle.tensors) total += payload_bytes(nt.tensor);
  return total;
}

inline std::size_t payload_bytes_matching(const ModelBundle& bundle,
                                          const std::function<bool(std::string_view)>& filter) {
  std::size_t total = 0;
  for (const auto& nt : bundle.tensors) {
    if (filter(nt.name)) total += payload_bytes(nt.tensor);
  }
  return total;
}

/// Checks name uniqueness, per-tensor consistency and, when a config is
/// present, that the architecture's tensors exist with matching shapes and
/// that adaptable weights are stored at lineage.precision_bits.
inline void validate_bundle(const ModelBundle& bundle) {
  for (std::size_t i = 0; i < bundle.tensors.size(); ++i) {
    const auto& nt = bundle.tensors[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (bundle.tensors[j].name == nt.name) {
        fail(ErrorKind::kInvariant, "duplicate tensor name '" + nt.name + "'");
      }
    }
    if (nt.name.size() > 0xFFFF) fail(ErrorKind::kInvariant, "tensor name too long");
    const Shape& shape = shape_of(nt.tensor);
    validate_shape(shape);
    if (numel_of(nt.tensor) != shape_numel(shape)) {
      fail(ErrorKind::kInvariant, "tensor '" + nt.name + "' length does not match shape");
    }
    if (const auto* q = std::get_if<QuantizedTensor>(&nt.tensor)) {
      if (q->bits != 4 && q->bits != 8) {
        fail(ErrorKind::kInvariant, "tensor '" + nt.name + "' has unsupported bit width");
      }
      if (q->scales.size() != 1 && q->scales.size() != q->rows()) {
        fail(ErrorKind::kInvariant, "tensor '" + nt.name + "' has a bad scale count");
      }
    }
  }
  const int bits = bundle.lineage.precision_bits;
  if (bits != 4 && bits != 8 && bits != 16 && bits != 32) {
    fail(ErrorKind::kInvariant, "lineage precision_bits must be one of 4, 8, 16, 32");
  }
  if (!bundle.config) return;
  bundle.config->validate();
  for (const auto& [name, shape] : architecture_tensors(*bundle.config)) {
    const StoredTensor* t = bundle.find(name);
    if (!t) fail(ErrorKind::kInvariant, "required tensor '" + name + "' missing");
    if (shape_of(*t) != shape) {
      fail(ErrorKind::kInvariant, "tensor '" + name + "' has shape " +
                                      shape_string(shape_of(*t)) + ", expected " +
                                      shape_string(shape));
    }
    const int stored = dtype_bits(dtype_of(*t));
    if (is_adaptable_weight(name) ? stored != bits : stored != 32) {
      fail(ErrorKind::kInvariant, "tensor '" + name + "' stored at " + std::to_string(stored) +
                                      " bits, lineage says " + std::to_string(bits));
    }
  }
}

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
    }
  }
  void put_bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  bool has(std::size_t n) const { return data_.size() - pos_ >= n; }
  std::size_t remaining() const { return data_.size() - pos_; }

  template <typename T>
  T get(const std::string& what) {
    if (!has(sizeof(T))) fail(ErrorKind::kCorruption, "truncated while reading " + what);
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }

  std::span<const char> take(std::size_t n, const std::string& what) {
    if (!has(n)) fail(ErrorKind::kCorruption, "truncated while reading " + what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

inline void write_payload(ByteWriter& w, const StoredTensor& t) {
  if (const auto* dense = std::get_if<Tensor>(&t)) {
    for (float v : dense->data) w.put(v);
  } else if (const auto* half = std::get_if<HalfTensor>(&t)) {
    for (std::uint16_t v : half->bits) w.put(v);
  } else {
    const auto& q = std::get<QuantizedTensor>(t);
    if (q.bits == 8) {
      for (std::int8_t c : q.codes) w.put(c);
    } else {
      const auto packed = pack4(q.codes);
      w.put_bytes(packed.data(), packed.size());
    }
    for (float s : q.scales) w.put(s);
  }
}

inline StoredTensor read_payload(std::span<const char> payload, DType dtype, Shape shape,
                                 const std::string& name) {
  const std::size_t n = shape_numel(shape);
  ByteReader r(payload);
  auto corrupt = [&](const std::string& why) {
    fail(ErrorKind::kCorruption, "tensor '" + name + "': " + why);
  };
  switch (dtype) {
    case DType::kF32: {
      if (payload.size() != 4 * n) corrupt("f32 payload length mismatch");
      std::vector<float> data(n);
      for (auto& v : data) v = r.get<float>(name);
      return Tensor(std::move(shape), std::move(data));
    }
    case DType::kF16: {
      if (payload.size() != 2 * n) corrupt("f16 payload length mismatch");
      HalfTensor h{std::move(shape), std::vector<std::uint16_t>(n)};
      for (auto& v : h.bits) v = r.get<std::uint16_t>(name);
      return h;
    }
    case DType::kI8:
    case DType::kI4: {
      const bool four = dtype == DType::kI4;
      const std::size_t code_bytes = four ? (n + 1) / 2 : n;
      if (payload.size() < code_bytes + 4 || (payload.size() - code_bytes) % 4 != 0) {
        corrupt("integer payload length mismatch");
      }
      QuantizedTensor q;
      q.bits = four ? 4 : 8;
      auto code_span = r.take(code_bytes, name);
      if (four) {
        std::vector<std::uint8_t> packed(code_span.begin(), code_span.end());
        q.codes = unpack4(packed, n);
      } else {
        q.codes.resize(n);
        std::memcpy(q.codes.data(), code_span.data(), n);
        if (std::find(q.codes.begin(), q.codes.end(), std::int8_t{-128}) != q.codes.end()) {
          corrupt("8-bit code -128 is outside the symmetric range");
        }
      }
      const std::size_t n_scales = (payload.size() - code_bytes) / 4;
      q.shape = std::move(shape);
      if (n_scales != 1 && n_scales != q.rows()) corrupt("bad scale count");
      q.scales.resize(n_scales);
      for (auto& s : q.scales) s = r.get<float>(name);
      return q;
    }
  }
  corrupt("unknown dtype");
  return Tensor{};
}

}  // namespace detail

inline constexpr char kBundleMagic[4] = {'E', 'A', 'L', 'M'};
inline constexpr std::uint16_t kBundleVersion = 1;

inline nlohmann::json bundle_metadata(const ModelBundle& bundle) {
  nlohmann::json meta;
  meta["config"] = bundle.config ? nlohmann::json(*bundle.config) : nlohmann::json(nullptr);
  meta["lineage"] = bundle.lineage;
  return meta;
}

/// Serializes to the container format in memory.
inline std::vector<char> encode_bundle(const ModelBundle& bundle) {
  validate_bundle(bundle);
  detail::ByteWriter w;
  w.put_bytes(kBundleMagic, 4);
  w.put(kBundleVersion);
  w.put(static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& nt : bundle.tensors) {
    w.put(static_cast<std::uint16_t>(nt.name.size()));
    w.put_bytes(nt.name.data(), nt.name.size());
    w.put(static_cast<std::uint8_t>(dtype_of(nt.tensor)));
    const Shape& shape = shape_of(nt.tensor);
    w.put(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) w.put(static_cast<std::uint64_t>(d));
    w.put(static_cast<std::uint64_t>(payload_bytes(nt.tensor)));
    detail::write_payload(w, nt.tensor);
  }
  const std::string meta = bundle_metadata(bundle).dump();
  w.put(static_cast<std::uint64_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  return std::move(w.buffer());
}

inline ModelBundle decode_bundle(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  if (!r.has(4) || std::memcmp(bytes.data(), kBundleMagic, 4) != 0) {
    fail(ErrorKind::kFormat, "bad magic, not an EALM bundle");
  }
  r.take(4, "magic");
  if (!r.has(2)) fail(ErrorKind::kFormat, "missing version");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kBundleVersion) {
    fail(ErrorKind::kFormat, "unsupported bundle version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  ModelBundle bundle;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "tensor #" + std::to_string(i);
    const auto name_len = r.get<std::uint16_t>(where + " name length");
    auto name_span = r.take(name_len, where + " name");
    std::string name(name_span.begin(), name_span.end());
    const auto dtype_code = r.get<std::uint8_t>("dtype of '" + name + "'");
    if (dtype_code > 3) {
      fail(ErrorKind::kFormat, "tensor '" + name + "' has unknown dtype " +
                                   std::to_string(dtype_code));
    }
    const auto rank = r.get<std::uint8_t>("rank of '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>("dims of '" + name + "'"));
      if (d == 0) fail(ErrorKind::kFormat, "tensor '" + name + "' has a zero dimension");
    }
    const auto len = r.get<std::uint64_t>("payload length of '" + name + "'");
    if (r.remaining() < len) {
      fail(ErrorKind::kCorruption, "payload of tensor '" + name + "' truncated (" +
                                       std::to_string(r.remaining()) + " of " +
                                       std::to_string(len) + " bytes present)");
    }
    auto payload = r.take(static_cast<std::size_t>(len), name);
    StoredTensor t = detail::read_payload(payload, static_cast<DType>(dtype_code),
                                          std::move(shape), name);
    if (bundle.find(name)) fail(ErrorKind::kFormat, "duplicate tensor name '" + name + "'");
    bundle.tensors.push_back({std::move(name), std::move(t)});
  }
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  auto meta_span = r.take(static_cast<std::size_t>(meta_len), "metadata");
  if (r.remaining() != 0) fail(ErrorKind::kFormat, "trailing bytes after metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_span.begin(), meta_span.end());
    if (!meta.at("config").is_null()) bundle.config = meta.at("config").get<LmConfig>();
    bundle.lineage = meta.at("lineage").get<Lineage>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad metadata block: ") + e.what());
  }
  validate_bundle(bundle);
  return bundle;
}

inline void save_bundle(const ModelBundle& bundle, const std::string& path) {
  const std::vector<char> bytes = encode_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write to '" + path + "' failed");
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_bundle(bytes);
}

}  // namespace ealm

#endif  // EALM_TENSORS_HPP_
