// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EALM_LM_CONFIG_HPP_
#define EALM_LM_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"

namespace ealm {

/// Architecture of the byte-level decoder. Vocabulary is the 256 byte values
/// followed by pad, bos and eos.
struct LmConfig {
  std::size_t vocab_size = 259;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t max_seq = 128;
  std::uint64_t init_seed = 0;

  bool operator==(const LmConfig&) const = default;

  void validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 ||
        max_seq < 1) {
      fail(ErrorKind::kConfig, "all LmConfig dimensions must be >= 1");
    }
    if (d_model % n_heads != 0) {
      fail(ErrorKind::kConfig, "d_model (" + std::to_string(d_model) +
                                   ") must be divisible by n_heads (" +
                                   std::to_string(n_heads) + ")");
    }
  }

  std::size_t head_dim() const { return d_model / n_heads; }
};

inline void to_json(nlohmann::json& j, const LmConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
                     {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},             {"max_seq", c.max_seq},
                     {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, LmConfig& c) {
  LmConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.max_seq = j.value("max_seq", d.max_seq);
  c.init_seed = j.value("init_seed", d.init_seed);
}

namespace names {

inline std::string layer(std::size_t l, std::string_view leaf) {
  return "layers." + std::to_string(l) + "." + std::string(leaf);
}

inline constexpr std::string_view kTokEmb = "tok_emb";
inline constexpr std::string_view kPosEmb = "pos_emb";
inline constexpr std::string_view kFinalNormWeight = "ln_f.weight";
inline constexpr std::string_view kFinalNormBias = "ln_f.bias";
inline constexpr std::string_view kLmHead = "lm_head";

// Per-layer leaves; the first six are the attention and MLP weight matrices.
inline constexpr std::string_view kWq = "attn.wq";
inline constexpr std::string_view kWk = "attn.wk";
inline constexpr std::string_view kWv = "attn.wv";
inline constexpr std::string_view kWo = "attn.wo";
inline constexpr std::string_view kW1 = "mlp.w1";
inline constexpr std::string_view kW2 = "mlp.w2";
inline constexpr std::string_view kB1 = "mlp.b1";
inline constexpr std::string_view kB2 = "mlp.b2";
inline constexpr std::string_view kLn1Weight = "ln1.weight";
inline constexpr std::string_view kLn1Bias = "ln1.bias";
inline constexpr std::string_view kLn2Weight = "ln2.weight";
inline constexpr std::string_view kLn2Bias = "ln2.bias";

inline constexpr std::string_view kMatrixLeaves[] = {kWq, kWk, kWv, kWo, kW1, kW2};

}  // namespace names

/// True for attention projections and MLP matrices: the default target set
/// for quantization, pruning and adapters.
inline bool is_adaptable_weight(std::string_view name) {
  if (!name.starts_with("layers.")) return false;
  for (std::string_view leaf : names::kMatrixLeaves) {
    if (name.size() > leaf.size() && name.ends_with(leaf) &&
        name[name.size() - leaf.size() - 1] == '.') {
      return true;
    }
  }
  return false;
}

/// Every tensor the architecture requires, in canonical order, with shapes.
/// Weight matrices are stored [out, in].
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> architecture_tensors(
    const LmConfig& c) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  const std::size_t d = c.d_model;
  out.emplace_back(std::string(names::kTokEmb), std::vector<std::size_t>{c.vocab_size, d});
  out.emplace_back(std::string(names::kPosEmb), std::vector<std::size_t>{c.max_seq, d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    out.emplace_back(names::layer(l, names::kLn1Weight), std::vector<std::size_t>{d});
    out.emplace_back(names::layer(l, names::kLn1Bias), std::vector<std::size_t>{d});
    out.emplace_back(names::layer(l, names::kWq), std::vector<std::size_t>{d, d});
    out.emplace_back(names::layer(l, names::kWk), std::vector<std::size_t>{d, d});
    out.emplace_back(names::layer(l, names::kWv), std::vector<std::size_t>{d, d});
    out.emplace_back(names::layer(l, names::kWo), std::vector<std::size_t>{d, d});
    out.emplace_back(names::layer(l, names::kLn2Weight), std::vector<std::size_t>{d});
    out.emplace_back(names::layer(l, names::kLn2Bias), std::vector<std::size_t>{d});
    out.emplace_back(names::layer(l, names::kW1), std::vector<std::size_t>{c.d_ff, d});
    out.emplace_back(names::layer(l, names::kB1), std::vector<std::size_t>{c.d_ff});
    out.emplace_back(names::layer(l, names::kW2), std::vector<std::size_t>{d, c.d_ff});
    out.emplace_back(names::layer(l, names::kB2), std::vector<std::size_t>{d});
  }
  out.emplace_back(std::string(names::kFinalNormWeight), std::vector<std::size_t>{d});
  out.emplace_back(std::string(names::kFinalNormBias), std::vector<std::size_t>{d});
  out.emplace_back(std::string(names::kLmHead), std::vector<std::size_t>{c.vocab_size, d});
  return out;
}

}  // namespace ealm

#endif  // EALM_LM_CONFIG_HPP_
