#pragma once

// Engram memory layer.
//
// For every position t the layer looks up two rows of a shared hashed table,
// one keyed by the bigram (x[t-1], x[t]) and one by the trigram
// (x[t-2], x[t-1], x[t]). Both rows are RMS-normalized and split into H
// heads. Per head, the query W_q h scores each pathway with a scaled dot
// product; a two-way softmax over those scores mixes the pathways, a sigmoid
// gate sigma(W_g h) scales the mix, and W_o projects the concatenated heads
// back to d_model:
//
//   h' = h + W_o concat_j( g_j * (a2_j e2_j + a3_j e3_j) )
//
// Positions without enough left context use bos_id in the n-gram key. The
// table starts at zero, so a fresh layer is the identity.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "toba/param.hpp"
#include "toba/tensor.hpp"
#include "toba/tokenizer.hpp"

namespace toba::engram {

using tok::TokenId;

inline constexpr std::uint64_t kHashC1 = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kHashC2 = 0xC2B2AE3D27D4EB4FULL;
inline constexpr std::uint64_t kHashC3 = 0x165667B19E3779F9ULL;

// Multiplicative-XOR hashes; the +1 offsets make id 0 contribute.
constexpr std::uint64_t hash_bigram(std::uint64_t a, std::uint64_t b,
                                    std::uint64_t table_size) {
  return (((a + 1) * kHashC1) ^ ((b + 1) * kHashC2)) % table_size;
}

constexpr std::uint64_t hash_trigram(std::uint64_t a, std::uint64_t b,
                                     std::uint64_t c,
                                     std::uint64_t table_size) {
  return (((a + 1) * kHashC1) ^ ((b + 1) * kHashC2) ^ ((c + 1) * kHashC3)) %
         table_size;
}

struct EngramConfig {
  std::size_t table_size = 4096;
  std::size_t dim = 8;    // d_e
  std::size_t heads = 2;  // H
  std::size_t insert_after_block = 3;
  double rms_eps = 1e-6;
  TokenId bos_id = tok::kBosId;

  std::size_t head_dim() const { return dim / heads; }
  // Throws ConfigError.
  void validate(std::size_t n_blocks) const;
};

template <typename T>
struct EngramParams {
  Param<T> table;     // table_size x d_e, zero at construction
  Param<T> w_q;       // d_model x d_e
  Param<T> w_o;       // d_e x d_model
  Param<T> w_g;       // d_model x H
  Param<T> rms_gain;  // 1 x d_e

  EngramParams() = default;
  EngramParams(const EngramConfig& cfg, std::size_t d_model);

  // Table stays zero; gains start at one; projections are N(0, stddev).
  void init(Rng& rng, double stddev);

  std::size_t d_model() const { return w_q.value.rows(); }

  template <typename F>
  void visit(F&& f) {
    f(table);
    f(w_q);
    f(w_o);
    f(w_g);
    f(rms_gain);
  }
  template <typename F>
  void visit(F&& f) const {
    f(table);
    f(w_q);
    f(w_o);
    f(w_g);
    f(rms_gain);
  }
};

// Row addressed by the bigram ending at position t (left-padded with bos_id).
std::size_t bigram_row(std::span<const TokenId> tokens, std::size_t t,
                       std::size_t table_size, TokenId bos_id);
std::size_t trigram_row(std::span<const TokenId> tokens, std::size_t t,
                        std::size_t table_size, TokenId bos_id);

template <typename T>
std::vector<T> lookup_bigram(std::span<const TokenId> tokens, std::size_t t,
                             const Matrix<T>& table,
                             TokenId bos_id = tok::kBosId);
template <typename T>
std::vector<T> lookup_trigram(std::span<const TokenId> tokens, std::size_t t,
                              const Matrix<T>& table,
                              TokenId bos_id = tok::kBosId);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps)
template <typename T>
std::vector<T> rmsnorm(std::span<const T> x, std::span<const T> gain, T eps);

// (q . e) / sqrt(len). Throws ShapeError on length mismatch.
template <typename T>
T relevance_score(std::span<const T> q, std::span<const T> e);

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// sigma(h W_g), one value per head.
template <typename T>
std::vector<T> gate(std::span<const T> h, const Matrix<T>& w_g);

// h' for a single position t of one token sequence.
template <typename T>
std::vector<T> engram_forward(std::span<const T> h,
                              std::span<const TokenId> tokens, std::size_t t,
                              const EngramParams<T>& params,
                              const EngramConfig& cfg);

// Activations kept by the batched forward pass for the backward pass.
template <typename T>
struct EngramCache {
  std::size_t positions = 0;
  std::vector<std::size_t> row2, row3;  // table rows per position
  Matrix<T> input;                      // h        N x D
  Matrix<T> q;                          // W_q h    N x d_e
  Matrix<T> x2, x3;                     // raw rows N x d_e
  std::vector<T> inv2, inv3;            // 1 / rms
  Matrix<T> e2, e3;                     // normalized rows
  Matrix<T> alpha2, alpha3;             // pathway weights N x H
  Matrix<T> g;                          // gates N x H
  Matrix<T> mixed;                      // a2 e2 + a3 e3 per head
  Matrix<T> gated;                      // g * mixed
};

// Batched layer over hidden [batch*seq x D] and tokens [batch x seq].
// out = h + Engram(h).
template <typename T>
void layer_forward(const Matrix<T>& h, std::span<const TokenId> tokens,
                   std::size_t batch, std::size_t seq,
                   const EngramParams<T>& params, const EngramConfig& cfg,
                   Matrix<T>& out, EngramCache<T>* cache);

// Accumulates parameter gradients into params.*.grad and writes
// dh = dout + d(Engram)/dh^T dout.
template <typename T>
void layer_backward(const Matrix<T>& dout, const EngramCache<T>& cache,
                    EngramParams<T>& params, const EngramConfig& cfg,
                    Matrix<T>& dh);

}  // namespace toba::engram
