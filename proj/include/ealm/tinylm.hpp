// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Byte-level pre-norm decoder with low-rank adapters.
//
// Per layer: x += Wo·attn(LN1(x)); x += W2·gelu(W1·LN2(x) + b1) + b2.
// Adapted matrices use W_eff = deq(W) + (alpha/r)·A·B with A [out, r] and
// B [r, in]. Training updates A and B only; the stored base never changes.

#ifndef EALM_TINYLM_HPP_
#define EALM_TINYLM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ealm/error.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/meter.hpp"
#include "ealm/rng.hpp"
#include "ealm/tensors.hpp"

namespace ealm::lm {

inline constexpr int kPad = 256;
inline constexpr int kBos = 257;
inline constexpr int kEos = 258;
inline constexpr int kSeparator = '\n';

// ---------------------------------------------------------------------------
// Tokenizer

inline std::vector<int> encode_bytes(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

/// Drops special ids.
inline std::string decode_bytes(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

/// BOS, prompt bytes, separator: the context a completion is generated from.
inline std::vector<int> prompt_tokens(std::string_view prompt) {
  std::vector<int> ids{kBos};
  for (unsigned char c : prompt) ids.push_back(c);
  ids.push_back(kSeparator);
  return ids;
}

/// A training sequence; next-token loss is taken on tokens[loss_start..].
struct TrainExample {
  std::vector<int> tokens;
  std::size_t loss_start = 1;
};

inline TrainExample make_example(std::string_view prompt, std::string_view reference) {
  TrainExample ex;
  ex.tokens = prompt_tokens(prompt);
  ex.loss_start = ex.tokens.size();
  for (unsigned char c : reference) ex.tokens.push_back(c);
  ex.tokens.push_back(kEos);
  return ex;
}

// ---------------------------------------------------------------------------
// Model init

/// Embeddings and matrices uniform in [-1/sqrt(d), 1/sqrt(d)] from a
/// per-tensor counter stream; norm gains 1, biases 0.
inline ModelBundle init_model(const LmConfig& config) {
  config.validate();
  ModelBundle b;
  b.config = config;
  const double s = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (auto& [name, shape] : architecture_tensors(config)) {
    Tensor t = Tensor::zeros(shape);
    const bool is_norm_gain = name.ends_with("ln1.weight") || name.ends_with("ln2.weight") ||
                              name == names::kFinalNormWeight;
    const bool is_bias = name.ends_with(".bias") || name.ends_with("mlp.b1") ||
                         name.ends_with("mlp.b2");
    if (is_norm_gain) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else if (!is_bias) {
      CounterRng rng(config.init_seed, name);
      for (std::size_t i = 0; i < t.numel(); ++i) {
        t.data[i] = static_cast<float>(rng.uniform(i, -s, s));
      }
    }
    b.add(name, std::move(t));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Adapters

struct LoraConfig {
  std::size_t rank = 4;
  float alpha = 8.0f;
};

struct LoraPair {
  std::string target;
  Tensor a;  // [out, r]
  Tensor b;  // [r, in]
};

struct LoraAdapters {
  std::size_t rank = 4;
  float alpha = 8.0f;
  std::vector<LoraPair> pairs;

  float scaling() const { return alpha / static_cast<float>(rank); }

  const LoraPair* find(std::string_view target) const {
    for (const auto& p : pairs) {
      if (p.target == target) return &p;
    }
    return nullptr;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.a.numel() + p.b.numel();
    return n;
  }
};

/// One pair per adaptable matrix: A ~ N(0, 1)/sqrt(r) from a seeded stream,
/// B = 0, so a fresh adapter leaves the model unchanged.
inline LoraAdapters init_adapters(const ModelBundle& b, const LoraConfig& cfg, std::uint64_t seed) {
  if (cfg.rank < 1) fail(ErrorKind::kConfig, "adapter rank must be >= 1");
  if (!(cfg.alpha > 0.0f)) fail(ErrorKind::kConfig, "adapter alpha must be > 0");
  LoraAdapters ad;
  ad.rank = cfg.rank;
  ad.alpha = cfg.alpha;
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  for (const auto& nt : b.tensors) {
    if (!is_adaptable_weight(nt.name)) continue;
    const Shape& shape = shape_of(nt.tensor);
    LoraPair p{nt.name, Tensor::zeros({shape[0], cfg.rank}), Tensor::zeros({cfg.rank, shape[1]})};
    CounterRng rng(seed, "lora." + nt.name);
    for (std::size_t i = 0; i < p.a.numel(); ++i) {
      p.a.data[i] = static_cast<float>(rng.normal(i) * inv_sqrt_r);
    }
    ad.pairs.push_back(std::move(p));
  }
  return ad;
}

inline ModelBundle adapters_to_bundle(const LoraAdapters& ad) {
  ModelBundle out;
  out.add("lora.alpha", Tensor({1}, {ad.alpha}));
  for (const auto& p : ad.pairs) {
    out.add("lora." + p.target + ".A", p.a);
    out.add("lora." + p.target + ".B", p.b);
  }
  return out;
}

inline LoraAdapters adapters_from_bundle(const ModelBundle& bundle) {
  LoraAdapters ad;
  const auto* alpha = std::get_if<Tensor>(&bundle.at("lora.alpha"));
  if (!alpha || alpha->numel() != 1) fail(ErrorKind::kFormat, "adapter bundle lacks lora.alpha");
  ad.alpha = alpha->data[0];
  bool first = true;
  for (const auto& nt : bundle.tensors) {
    if (!nt.name.ends_with(".A")) continue;
    const std::string target = nt.name.substr(5, nt.name.size() - 7);
    const auto* a = std::get_if<Tensor>(&nt.tensor);
    const auto* b = std::get_if<Tensor>(&bundle.at("lora." + target + ".B"));
    if (!a || !b || !a->is_matrix() || !b->is_matrix() || a->shape[1] != b->shape[0]) {
      fail(ErrorKind::kFormat, "malformed adapter pair for '" + target + "'");
    }
    if (first) ad.rank = a->shape[1];
    if (a->shape[1] != ad.rank) fail(ErrorKind::kFormat, "adapter ranks differ");
    first = false;
    ad.pairs.push_back({target, *a, *b});
  }
  return ad;
}

// ---------------------------------------------------------------------------
// Dense working weights

struct MacCounter {
  std::uint64_t macs = 0;
  std::uint64_t skipped_macs = 0;
};

namespace detail {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0f) {}

  float* row(std::size_t r) { return v.data() + r * cols; }
  const float* row(std::size_t r) const { return v.data() + r * cols; }
  float& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

struct Linear {
  std::string name;
  Mat w;  // [out, in]
  std::size_t zeros = 0;
};

struct LayerWeights {
  std::vector<float> ln1_w, ln1_b, ln2_w, ln2_b, b1, b2;
  Linear wq, wk, wv, wo, w1, w2;
};

struct Weights {
  LmConfig config;
  Mat tok_emb, pos_emb;
  std::vector<LayerWeights> layers;
  std::vector<float> lnf_w, lnf_b;
  Linear lm_head;
};

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  m.v = t.data;
  return m;
}

inline Linear make_linear(const ModelBundle& b, const std::string& name,
                          const LoraAdapters* adapters) {
  Linear lin{name, to_mat(to_float(b.at(name))), 0};
  if (adapters) {
    if (const LoraPair* p = adapters->find(name)) {
      const float s = adapters->scaling();
      const std::size_t r = p->a.cols();
      if (p->a.rows() != lin.w.rows || p->b.cols() != lin.w.cols || p->b.rows() != r) {
        fail(ErrorKind::kShape, "adapter for '" + name + "' does not match the base matrix");
      }
      for (std::size_t o = 0; o < lin.w.rows; ++o) {
        for (std::size_t i = 0; i < lin.w.cols; ++i) {
          float acc = 0.0f;
          for (std::size_t k = 0; k < r; ++k) acc += p->a.at(o, k) * p->b.at(k, i);
          lin.w(o, i) += s * acc;
        }
      }
    }
  }
  lin.zeros = static_cast<std::size_t>(std::count(lin.w.v.begin(), lin.w.v.end(), 0.0f));
  return lin;
}

inline std::vector<float> vec(const ModelBundle& b, std::string_view name) {
  return to_float(b.at(name)).data;
}

inline Weights materialize(const ModelBundle& b, const LoraAdapters* adapters) {
  if (!b.config) fail(ErrorKind::kInvariant, "model bundle has no architecture config");
  Weights w;
  w.config = *b.config;
  w.tok_emb = to_mat(to_float(b.at(names::kTokEmb)));
  w.pos_emb = to_mat(to_float(b.at(names::kPosEmb)));
  for (std::size_t l = 0; l < w.config.n_layers; ++l) {
    LayerWeights lw;
    lw.ln1_w = vec(b, names::layer(l, names::kLn1Weight));
    lw.ln1_b = vec(b, names::layer(l, names::kLn1Bias));
    lw.ln2_w = vec(b, names::layer(l, names::kLn2Weight));
    lw.ln2_b = vec(b, names::layer(l, names::kLn2Bias));
    lw.b1 = vec(b, names::layer(l, names::kB1));
    lw.b2 = vec(b, names::layer(l, names::kB2));
    lw.wq = make_linear(b, names::layer(l, names::kWq), adapters);
    lw.wk = make_linear(b, names::layer(l, names::kWk), adapters);
    lw.wv = make_linear(b, names::layer(l, names::kWv), adapters);
    lw.wo = make_linear(b, names::layer(l, names::kWo), adapters);
    lw.w1 = make_linear(b, names::layer(l, names::kW1), adapters);
    lw.w2 = make_linear(b, names::layer(l, names::kW2), adapters);
    w.layers.push_back(std::move(lw));
  }
  w.lnf_w = vec(b, names::kFinalNormWeight);
  w.lnf_b = vec(b, names::kFinalNormBias);
  w.lm_head = make_linear(b, std::string(names::kLmHead), adapters);
  return w;
}

// y = x·Wᵀ (+ bias)
inline Mat linear_forward(const Mat& x, const Linear& lin, const std::vector<float>* bias,
                          MacCounter* counter) {
  Mat y(x.rows, lin.w.rows);
  for (std::size_t t = 0; t < x.rows; ++t) {
    const float* xr = x.row(t);
    float* yr = y.row(t);
    for (std::size_t o = 0; o < lin.w.rows; ++o) {
      const float* wr = lin.w.row(o);
      float acc = bias ? (*bias)[o] : 0.0f;
      for (std::size_t i = 0; i < lin.w.cols; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
    if (counter) {
      counter->macs += lin.w.rows * lin.w.cols;
      counter->skipped_macs += lin.zeros;
    }
  }
  return y;
}

struct LnCache {
  Mat xhat;
  std::vector<float> rstd;
};

inline constexpr float kLnEps = 1e-5f;

inline Mat layer_norm(const Mat& x, const std::vector<float>& gain, const std::vector<float>& bias,
                      LnCache* cache) {
  Mat y(x.rows, x.cols);
  if (cache) {
    cache->xhat = Mat(x.rows, x.cols);
    cache->rstd.assign(x.rows, 0.0f);
  }
  for (std::size_t t = 0; t < x.rows; ++t) {
    const float* xr = x.row(t);
    double mean = 0.0;
    for (std::size_t i = 0; i < x.cols; ++i) mean += xr[i];
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t i = 0; i < x.cols; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(x.cols);
    const float rstd = static_cast<float>(1.0 / std::sqrt(var + kLnEps));
    for (std::size_t i = 0; i < x.cols; ++i) {
      const float xh = static_cast<float>(xr[i] - mean) * rstd;
      if (cache) cache->xhat(t, i) = xh;
      y(t, i) = xh * gain[i] + bias[i];
    }
    if (cache) cache->rstd[t] = rstd;
  }
  return y;
}

inline Mat layer_norm_backward(const Mat& dy, const std::vector<float>& gain, const LnCache& c) {
  Mat dx(dy.rows, dy.cols);
  const double n = static_cast<double>(dy.cols);
  for (std::size_t t = 0; t < dy.rows; ++t) {
    double mean_dxh = 0.0;
    double mean_dxh_xh = 0.0;
    for (std::size_t i = 0; i < dy.cols; ++i) {
      const double dxh = static_cast<double>(dy(t, i)) * gain[i];
      mean_dxh += dxh;
      mean_dxh_xh += dxh * c.xhat(t, i);
    }
    mean_dxh /= n;
    mean_dxh_xh /= n;
    for (std::size_t i = 0; i < dy.cols; ++i) {
      const double dxh = static_cast<double>(dy(t, i)) * gain[i];
      dx(t, i) = static_cast<float>(c.rstd[t] * (dxh - mean_dxh - c.xhat(t, i) * mean_dxh_xh));
    }
  }
  return dx;
}

inline float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(std::numbers::sqrt2 / 2.0)));
}

inline float gelu_grad(float x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * static_cast<double>(x) * x) / std::sqrt(2.0 * std::numbers::pi);
  return static_cast<float>(cdf + x * pdf);
}

struct LayerCache {
  LnCache ln1, ln2;
  Mat h1, q, k, v, o, h2, u, g;
  std::vector<float> probs;  // [head][i][j], causal rows
};

struct Cache {
  std::vector<LayerCache> layers;
  LnCache lnf;
  Mat hf;
};

inline void softmax_inplace(float* row, std::size_t n) {
  float mx = -std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

inline void check_tokens(const LmConfig& c, std::span<const int> tokens) {
  if (tokens.empty()) fail(ErrorKind::kLength, "empty token sequence");
  if (tokens.size() > c.max_seq) {
    fail(ErrorKind::kLength, "sequence of " + std::to_string(tokens.size()) +
                                 " tokens exceeds max_seq " + std::to_string(c.max_seq));
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      fail(ErrorKind::kVocab, "token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(c.vocab_size));
    }
  }
}

/// Full forward pass; returns logits [T, vocab].
inline Mat run_forward(const Weights& w, std::span<const int> tokens, Cache* cache,
                       MacCounter* counter) {
  const LmConfig& c = w.config;
  check_tokens(c, tokens);
  const std::size_t T = tokens.size();
  const std::size_t d = c.d_model;
  const std::size_t H = c.n_heads;
  const std::size_t hd = c.head_dim();
  const float att_scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Mat x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const float* te = w.tok_emb.row(static_cast<std::size_t>(tokens[t]));
    const float* pe = w.pos_emb.row(t);
    for (std::size_t i = 0; i < d; ++i) x(t, i) = te[i] + pe[i];
  }
  if (cache) cache->layers.assign(c.n_layers, LayerCache{});

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerCache local;
    LayerCache& lc = cache ? cache->layers[l] : local;

    lc.h1 = layer_norm(x, lw.ln1_w, lw.ln1_b, &lc.ln1);
    lc.q = linear_forward(lc.h1, lw.wq, nullptr, counter);
    lc.k = linear_forward(lc.h1, lw.wk, nullptr, counter);
    lc.v = linear_forward(lc.h1, lw.wv, nullptr, counter);
    lc.o = Mat(T, d);
    lc.probs.assign(H * T * T, 0.0f);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < T; ++i) {
        float* p = lc.probs.data() + (h * T + i) * T;
        for (std::size_t j = 0; j <= i; ++j) {
          float acc = 0.0f;
          for (std::size_t e = 0; e < hd; ++e) acc += lc.q(i, off + e) * lc.k(j, off + e);
          p[j] = acc * att_scale;
        }
        softmax_inplace(p, i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t e = 0; e < hd; ++e) lc.o(i, off + e) += p[j] * lc.v(j, off + e);
        }
        if (counter) counter->macs += 2 * (i + 1) * hd;
      }
    }
    Mat a = linear_forward(lc.o, lw.wo, nullptr, counter);
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += a.v[i];

    lc.h2 = layer_norm(x, lw.ln2_w, lw.ln2_b, &lc.ln2);
    lc.u = linear_forward(lc.h2, lw.w1, &lw.b1, counter);
    lc.g = Mat(lc.u.rows, lc.u.cols);
    for (std::size_t i = 0; i < lc.u.v.size(); ++i) lc.g.v[i] = gelu(lc.u.v[i]);
    Mat m = linear_forward(lc.g, lw.w2, &lw.b2, counter);
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += m.v[i];
  }

  LnCache lnf_local;
  Mat hf = layer_norm(x, w.lnf_w, w.lnf_b, cache ? &cache->lnf : &lnf_local);
  Mat logits = linear_forward(hf, w.lm_head, nullptr, counter);
  if (cache) cache->hf = std::move(hf);
  return logits;
}

// dX = dY·W ; dW += dYᵀ·X
inline Mat linear_backward(const Mat& dy, const Mat& x, const Linear& lin, Mat* dw) {
  Mat dx(dy.rows, lin.w.cols);
  for (std::size_t t = 0; t < dy.rows; ++t) {
    const float* dyr = dy.row(t);
    float* dxr = dx.row(t);
    for (std::size_t o = 0; o < lin.w.rows; ++o) {
      const float g = dyr[o];
      if (g == 0.0f) continue;
      const float* wr = lin.w.row(o);
      for (std::size_t i = 0; i < lin.w.cols; ++i) dxr[i] += g * wr[i];
    }
  }
  if (dw) {
    for (std::size_t t = 0; t < dy.rows; ++t) {
      const float* dyr = dy.row(t);
      const float* xr = x.row(t);
      for (std::size_t o = 0; o < lin.w.rows; ++o) {
        const float g = dyr[o];
        if (g == 0.0f) continue;
        float* dwr = dw->row(o);
        for (std::size_t i = 0; i < lin.w.cols; ++i) dwr[i] += g * xr[i];
      }
    }
  }
  return dx;
}

/// Gradients of the adapted matrices' effective weights, keyed like the
/// linear layers. Only entries present in `grads` are accumulated.
struct WeightGrads {
  std::vector<std::pair<std::string, Mat>> mats;

  Mat* find(const std::string& name) {
    for (auto& [n, m] : mats) {
      if (n == name) return &m;
    }
    return nullptr;
  }
};

inline void run_backward(const Weights& w, const Cache& cache, const Mat& dlogits,
                         WeightGrads& grads) {
  const LmConfig& c = w.config;
  const std::size_t T = dlogits.rows;
  const std::size_t H = c.n_heads;
  const std::size_t hd = c.head_dim();
  const float att_scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Mat dhf = linear_backward(dlogits, cache.hf, w.lm_head, grads.find(w.lm_head.name));
  Mat dx = layer_norm_backward(dhf, w.lnf_w, cache.lnf);

  for (std::size_t l = c.n_layers; l-- > 0;) {
    const LayerWeights& lw = w.layers[l];
    const LayerCache& lc = cache.layers[l];

    // MLP branch.
    Mat dg = linear_backward(dx, lc.g, lw.w2, grads.find(lw.w2.name));
    Mat du(dg.rows, dg.cols);
    for (std::size_t i = 0; i < du.v.size(); ++i) du.v[i] = dg.v[i] * gelu_grad(lc.u.v[i]);
    Mat dh2 = linear_backward(du, lc.h2, lw.w1, grads.find(lw.w1.name));
    Mat dx_mlp = layer_norm_backward(dh2, lw.ln2_w, lc.ln2);
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx_mlp.v[i];

    // Attention branch.
    Mat d_o = linear_backward(dx, lc.o, lw.wo, grads.find(lw.wo.name));
    Mat dq(T, c.d_model), dk(T, c.d_model), dv(T, c.d_model);
    std::vector<float> dp(T);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < T; ++i) {
        const float* p = lc.probs.data() + (h * T + i) * T;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          float acc = 0.0f;
          for (std::size_t e = 0; e < hd; ++e) {
            acc += d_o(i, off + e) * lc.v(j, off + e);
            dv(j, off + e) += p[j] * d_o(i, off + e);
          }
          dp[j] = acc;
          dot += static_cast<double>(p[j]) * acc;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const float ds = p[j] * (dp[j] - static_cast<float>(dot)) * att_scale;
          for (std::size_t e = 0; e < hd; ++e) {
            dq(i, off + e) += ds * lc.k(j, off + e);
            dk(j, off + e) += ds * lc.q(i, off + e);
          }
        }
      }
    }
    Mat dh1 = linear_backward(dq, lc.h1, lw.wq, grads.find(lw.wq.name));
    Mat dh1k = linear_backward(dk, lc.h1, lw.wk, grads.find(lw.wk.name));
    Mat dh1v = linear_backward(dv, lc.h1, lw.wv, grads.find(lw.wv.name));
    for (std::size_t i = 0; i < dh1.v.size(); ++i) dh1.v[i] += dh1k.v[i] + dh1v.v[i];
    Mat dx_att = layer_norm_backward(dh1, lw.ln1_w, lc.ln1);
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx_att.v[i];
  }
}

inline Tensor to_tensor(Mat m) { return Tensor({m.rows, m.cols}, std::move(m.v)); }

/// Token-summed cross-entropy of positions predicting tokens[loss_start..];
/// fills dlogits with d(sum)/d(logits) when requested.
inline double sequence_loss(const Mat& logits, const TrainExample& ex, Mat* dlogits,
                            std::size_t* counted) {
  double total = 0.0;
  std::size_t n = 0;
  if (dlogits) *dlogits = Mat(logits.rows, logits.cols);
  for (std::size_t t = 0; t + 1 < ex.tokens.size(); ++t) {
    if (t + 1 < ex.loss_start) continue;
    const float* row = logits.row(t);
    const int target = ex.tokens[t + 1];
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double lse = std::log(sum) + mx;
    total += lse - row[target];
    ++n;
    if (dlogits) {
      float* g = dlogits->row(t);
      for (std::size_t j = 0; j < logits.cols; ++j) {
        g[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - lse));
      }
      g[target] -= 1.0f;
    }
  }
  if (counted) *counted = n;
  return total;
}

inline std::span<const int> inputs_of(const TrainExample& ex) {
  if (ex.tokens.size() < 2) fail(ErrorKind::kLength, "training example needs >= 2 tokens");
  return std::span<const int>(ex.tokens).first(ex.tokens.size() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inference

/// Logits [len, vocab] for one sequence.
inline Tensor forward(const ModelBundle& b, const LoraAdapters* adapters,
                      std::span<const int> tokens, MacCounter* counter = nullptr) {
  const detail::Weights w = detail::materialize(b, adapters);
  return detail::to_tensor(detail::run_forward(w, tokens, nullptr, counter));
}

/// Each item evaluated independently.
inline std::vector<Tensor> forward_batch(const ModelBundle& b, const LoraAdapters* adapters,
                                         const std::vector<std::vector<int>>& batch) {
  const detail::Weights w = detail::materialize(b, adapters);
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (const auto& seq : batch) {
    out.push_back(detail::to_tensor(detail::run_forward(w, seq, nullptr, nullptr)));
  }
  return out;
}

/// Row-wise softmax of a logits matrix.
inline Tensor softmax_rows(const Tensor& logits) {
  Tensor p = logits;
  for (std::size_t r = 0; r < p.rows(); ++r) detail::softmax_inplace(p.row(r).data(), p.cols());
  return p;
}

/// Appends argmax tokens (lowest id on ties) until eos, max_new tokens, or the
/// context is full. The eos itself is not appended.
inline std::vector<int> greedy_decode(const ModelBundle& b, const LoraAdapters* adapters,
                                      std::span<const int> prompt, std::size_t max_new,
                                      MacCounter* counter = nullptr) {
  if (prompt.empty()) fail(ErrorKind::kLength, "empty prompt");
  if (!b.config) fail(ErrorKind::kInvariant, "model bundle has no architecture config");
  if (prompt.size() > b.config->max_seq) {
    fail(ErrorKind::kLength, "prompt of " + std::to_string(prompt.size()) +
                                 " tokens exceeds max_seq " + std::to_string(b.config->max_seq));
  }
  std::vector<int> seq(prompt.begin(), prompt.end());
  if (max_new == 0) return seq;
  const detail::Weights w = detail::materialize(b, adapters);
  for (std::size_t step = 0; step < max_new && seq.size() < w.config.max_seq; ++step) {
    const detail::Mat logits = detail::run_forward(w, seq, nullptr, counter);
    const float* last = logits.row(logits.rows - 1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j) {
      if (last[j] > last[best]) best = j;
    }
    if (static_cast<int>(best) == kEos) break;
    seq.push_back(static_cast<int>(best));
  }
  return seq;
}

/// Generated continuation text for a prompt string.
inline std::string complete(const ModelBundle& b, const LoraAdapters* adapters,
                            std::string_view prompt, std::size_t max_new,
                            std::size_t* generated = nullptr, MacCounter* counter = nullptr) {
  const std::vector<int> ctx = prompt_tokens(prompt);
  const std::vector<int> out = greedy_decode(b, adapters, ctx, max_new, counter);
  if (generated) *generated = out.size() - ctx.size();
  return decode_bytes(std::span<const int>(out).subspan(ctx.size()));
}

// ---------------------------------------------------------------------------
// Training

struct AdapterGrads {
  std::vector<Tensor> da;  // aligned with LoraAdapters::pairs
  std::vector<Tensor> db;
};

/// Mean next-token loss over the examples' completion tokens and, when
/// `grads` is set, its gradient with respect to every A and B.
inline double loss_and_grad(const ModelBundle& b, const LoraAdapters& adapters,
                            std::span<const TrainExample> examples, AdapterGrads* grads,
                            MacCounter* counter = nullptr) {
  const detail::Weights w = detail::materialize(b, &adapters);
  detail::WeightGrads wg;
  if (grads) {
    for (const auto& p : adapters.pairs) {
      wg.mats.emplace_back(p.target, detail::Mat(p.a.rows(), p.b.cols()));
    }
  }
  double total = 0.0;
  std::size_t count = 0;
  std::vector<detail::Mat> dlogits_per(examples.size());
  // First pass for the token count so gradients come out already averaged.
  std::vector<detail::Cache> caches(grads ? examples.size() : 0);
  std::vector<detail::Mat> logits(examples.size());
  for (std::size_t e = 0; e < examples.size(); ++e) {
    logits[e] = detail::run_forward(w, detail::inputs_of(examples[e]),
                                    grads ? &caches[e] : nullptr, counter);
    std::size_t n = 0;
    total += detail::sequence_loss(logits[e], examples[e], grads ? &dlogits_per[e] : nullptr, &n);
    count += n;
  }
  if (count == 0) fail(ErrorKind::kLength, "examples contain no completion tokens");
  const double mean = total / static_cast<double>(count);
  if (grads) {
    const float inv = static_cast<float>(1.0 / static_cast<double>(count));
    for (std::size_t e = 0; e < examples.size(); ++e) {
      for (float& g : dlogits_per[e].v) g *= inv;
      detail::run_backward(w, caches[e], dlogits_per[e], wg);
    }
    const float s = adapters.scaling();
    grads->da.clear();
    grads->db.clear();
    for (std::size_t k = 0; k < adapters.pairs.size(); ++k) {
      const LoraPair& p = adapters.pairs[k];
      const detail::Mat& dw = wg.mats[k].second;
      const std::size_t rows = p.a.rows(), r = p.a.cols(), cols = p.b.cols();
      Tensor da = Tensor::zeros({rows, r});
      Tensor db = Tensor::zeros({r, cols});
      // dA = s·dW·Bᵀ, dB = s·Aᵀ·dW
      for (std::size_t o = 0; o < rows; ++o) {
        for (std::size_t i = 0; i < cols; ++i) {
          const float g = dw(o, i);
          if (g == 0.0f) continue;
          for (std::size_t q = 0; q < r; ++q) {
            da.at(o, q) += s * g * p.b.at(q, i);
            db.at(q, i) += s * g * p.a.at(o, q);
          }
        }
      }
      grads->da.push_back(std::move(da));
      grads->db.push_back(std::move(db));
    }
  }
  return mean;
}

inline double evaluate_loss(const ModelBundle& b, const LoraAdapters& adapters,
                            std::span<const TrainExample> examples) {
  return loss_and_grad(b, adapters, examples, nullptr);
}

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;
  meter::EnergyReport energy;
};

struct TrainOptions {
  /// Examples per gradient step; 0 means one full-batch step per epoch.
  std::size_t batch_size = 1;
};

// ---------------------------------------------------------------------------
// Cost accounting

/// Closed-form MAC count of one forward pass over `seq_len` tokens. Skipped
/// MACs are those against exactly-zero stored weights. When adapters are
/// given they run as a separate low-rank path, T·r·(out + in) MACs each.
inline MacCounter count_flops_and_skipped(const ModelBundle& b, std::size_t seq_len,
                                          const LoraAdapters* adapters = nullptr) {
  if (!b.config) fail(ErrorKind::kInvariant, "model bundle has no architecture config");
  const LmConfig& c = *b.config;
  const std::uint64_t T = seq_len;
  MacCounter out;
  auto matrix = [&](const std::string& name) {
    const StoredTensor& t = b.at(name);
    const std::uint64_t n = numel_of(t);
    std::uint64_t zeros = 0;
    const Tensor dense = to_float(t);
    for (float v : dense.data) zeros += v == 0.0f ? 1 : 0;
    out.macs += T * n;
    out.skipped_macs += T * zeros;
    if (adapters) {
      if (const LoraPair* p = adapters->find(name)) {
        out.macs += T * adapters->rank * (p->a.rows() + p->b.cols());
      }
    }
  };
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (std::string_view leaf : names::kMatrixLeaves) matrix(names::layer(l, leaf));
    out.macs += static_cast<std::uint64_t>(c.d_model) * T * (T + 1);  // scores + weighted sum
  }
  matrix(std::string(names::kLmHead));
  return out;
}

inline MacCounter count_flops_and_skipped(const ModelBundle& b, std::span<const int> tokens) {
  return count_flops_and_skipped(b, tokens.size());
}

/// Work of one forward pass for the energy model: MACs, every stored weight
/// byte streamed once, and every low-precision element widened once.
inline meter::Workload forward_workload(const ModelBundle& b, const LoraAdapters* adapters,
                                        std::size_t seq_len) {
  const MacCounter mc = count_flops_and_skipped(b, seq_len, adapters);
  meter::Workload w;
  w.macs = static_cast<double>(mc.macs);
  w.skipped_macs = static_cast<double>(mc.skipped_macs);
  w.weight_bytes = static_cast<double>(payload_bytes(b));
  if (adapters) w.weight_bytes += 4.0 * static_cast<double>(adapters->parameter_count());
  for (const auto& nt : b.tensors) {
    const double n = static_cast<double>(numel_of(nt.tensor));
    switch (dtype_of(nt.tensor)) {
      case DType::kI4: w.dequant_4 += n; break;
      case DType::kI8: w.dequant_8 += n; break;
      case DType::kF16: w.dequant_16 += n; break;
      case DType::kF32: break;
    }
  }
  return w;
}

/// Forward + backward over one example, costed as three forward passes.
inline meter::Workload training_workload(const ModelBundle& b, const LoraAdapters& adapters,
                                         const TrainExample& ex) {
  return forward_workload(b, &adapters, ex.tokens.size() - 1).scaled(3.0);
}

/// Workload of a greedy decode that produced `generated` tokens from a prompt
/// of `prompt_len` tokens (one full forward per step, no cache).
inline meter::Workload decode_workload(const ModelBundle& b, const LoraAdapters* adapters,
                                       std::size_t prompt_len, std::size_t generated) {
  meter::Workload w;
  // The final step that emits eos (or hits the limit) is a forward too.
  for (std::size_t step = 0; step <= generated; ++step) {
    const std::size_t len = prompt_len + step;
    if (len > b.config->max_seq) break;
    w += forward_workload(b, adapters, len);
  }
  return w;
}

/// One pass over `examples` in order, stepping A and B by plain gradient
/// descent. The recorded loss is the token-weighted mean of the losses seen
/// before each step. When a meter is given the epoch runs inside one span
/// and its modeled work is charged.
inline std::pair<LoraAdapters, TrainRecord> train_epoch(const ModelBundle& b,
                                                        const LoraAdapters& adapters,
                                                        std::span<const TrainExample> examples,
                                                        float lr, const TrainOptions& opts = {},
                                                        int epoch_index = 0,
                                                        meter::Meter* meter = nullptr) {
  if (examples.empty()) fail(ErrorKind::kLength, "training dataset is empty");
  LoraAdapters current = adapters;
  TrainRecord rec;
  rec.epoch = epoch_index;

  auto body = [&](meter::Meter* m) {
    const std::size_t batch = opts.batch_size == 0 ? examples.size() : opts.batch_size;
    double weighted = 0.0;
    std::size_t tokens = 0;
    meter::Workload work;
    for (std::size_t start = 0; start < examples.size(); start += batch) {
      const auto chunk = examples.subspan(start, std::min(batch, examples.size() - start));
      std::size_t n_tokens = 0;
      for (const auto& ex : chunk) {
        for (std::size_t t = 0; t + 1 < ex.tokens.size(); ++t) n_tokens += t + 1 >= ex.loss_start;
        work += training_workload(b, current, ex);
      }
      AdapterGrads g;
      const double loss = loss_and_grad(b, current, chunk, &g);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kDivergence, "non-finite loss at lr=" + std::to_string(lr));
      }
      weighted += loss * static_cast<double>(n_tokens);
      tokens += n_tokens;
      if (lr != 0.0f) {
        for (std::size_t k = 0; k < current.pairs.size(); ++k) {
          auto& p = current.pairs[k];
          for (std::size_t i = 0; i < p.a.numel(); ++i) p.a.data[i] -= lr * g.da[k].data[i];
          for (std::size_t i = 0; i < p.b.numel(); ++i) p.b.data[i] -= lr * g.db[k].data[i];
        }
      }
    }
    rec.loss = weighted / static_cast<double>(tokens);
    for (const auto& p : current.pairs) {
      if (!p.a.all_finite() || !p.b.all_finite()) {
        fail(ErrorKind::kDivergence, "adapter weights diverged at lr=" + std::to_string(lr));
      }
    }
    if (m) m->charge(work);
  };

  if (meter) {
    rec.energy = meter::measure(*meter, [&](meter::Meter& m) { body(&m); });
  } else {
    body(nullptr);
  }
  return {std::move(current), rec};
}

// ---------------------------------------------------------------------------
// Merge

/// Folds (alpha/r)·A·B into a 32-bit base.
inline ModelBundle merge_adapters(const ModelBundle& b, const LoraAdapters& adapters) {
  if (b.lineage.precision_bits != 32) {
    fail(ErrorKind::kPrecision, "cannot merge adapters into a " +
                                    std::to_string(b.lineage.precision_bits) + "-bit base");
  }
  ModelBundle out = b;
  for (const auto& p : adapters.pairs) {
    auto* t = std::get_if<Tensor>(&out.at(p.target));
    if (!t) fail(ErrorKind::kPrecision, "tensor '" + p.target + "' is not stored at 32 bits");
    const detail::Linear merged = detail::make_linear(b, p.target, &adapters);
    t->data = merged.w.v;
  }
  return out;
}

}  // namespace ealm::lm

#endif  // EALM_TINYLM_HPP_
