#pragma once

// Decoder-only transformer with pre-norm residual blocks:
//   x += W_o Attn(RMSNorm(x) W_qkv)
//   x += MLP(RMSNorm(x))
// Learned absolute positions, RMSNorm everywhere, untied output head unless
// tie_embeddings is set. An optional engram layer sits after block
// `engram->insert_after_block` (0 = directly after the embeddings).
//
// Forward and backward are explicit: the forward pass fills a cache and the
// backward pass accumulates into Param::grad.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toba/engram.hpp"
#include "toba/param.hpp"
#include "toba/tensor.hpp"
#include "toba/tokenizer.hpp"

namespace toba::nn {

using tok::TokenId;

enum class Precision { float32, float64 };

struct ModelConfig {
  std::size_t n_blocks = 2;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t context_len = 32;
  std::size_t vocab_size = 69;
  std::size_t mlp_ratio = 4;
  bool tie_embeddings = false;
  bool zero_init_head = true;
  double init_std = 0.02;
  double norm_eps = 1e-5;
  std::optional<engram::EngramConfig> engram;
  Precision precision = Precision::float64;

  // Throws ConfigError.
  void validate() const;
  std::size_t d_head() const { return d_model / n_heads; }

  // Small model used by tests and desk-scale experiments.
  static ModelConfig desk();
  // Backbone of the 1.2B configuration (36 blocks, d = 1280, 20 heads,
  // context 1024, vocabulary 2,843, engram table 500,000 x 768 with 8 heads
  // after block 3). The same model is also quoted as 1.1B; both
  // figures are kept here for reference only. Constructible, not trainable
  // at desk scale. Its training batch is listed as 36 x 4 "effective 128",
  // though 36 x 4 is 144; that lives in TrainConfig, not here.
  static ModelConfig full_1p2b();
};

template <typename T>
struct BlockParams {
  Param<T> ln1;         // 1 x D
  Param<T> w_qkv;       // D x 3D
  Param<T> w_attn_out;  // D x D
  Param<T> ln2;         // 1 x D
  Param<T> w_fc;        // D x rD
  Param<T> b_fc;        // 1 x rD
  Param<T> w_proj;      // rD x D
  Param<T> b_proj;      // 1 x D

  BlockParams() = default;
  BlockParams(const ModelConfig& cfg, std::size_t index);

  template <typename F>
  void visit(F&& f) {
    f(ln1), f(w_qkv), f(w_attn_out), f(ln2), f(w_fc), f(b_fc), f(w_proj),
        f(b_proj);
  }
  template <typename F>
  void visit(F&& f) const {
    f(ln1), f(w_qkv), f(w_attn_out), f(ln2), f(w_fc), f(b_fc), f(w_proj),
        f(b_proj);
  }
};

template <typename T>
struct ModelParams {
  Param<T> tok_emb;  // V x D
  Param<T> pos_emb;  // context_len x D
  std::vector<BlockParams<T>> blocks;
  Param<T> ln_f;  // 1 x D
  Param<T> head;  // D x V, empty when tied
  std::optional<engram::EngramParams<T>> engram;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);

  // Deterministic initialization. The engram parameters draw from their own
  // stream, so backbone weights do not depend on whether engram is enabled.
  void init(const ModelConfig& cfg, std::uint64_t seed);
  void zero_grad();
  std::size_t num_parameters() const;

  template <typename F>
  void visit(F&& f) {
    f(tok_emb);
    f(pos_emb);
    for (auto& b : blocks) b.visit(f);
    f(ln_f);
    if (!head.value.empty()) f(head);
    if (engram) engram->visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    f(tok_emb);
    f(pos_emb);
    for (const auto& b : blocks) b.visit(f);
    f(ln_f);
    if (!head.value.empty()) f(head);
    if (engram) engram->visit(f);
  }
};

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;  // batch x seq, row-major
};

template <typename T>
struct BlockCache {
  Matrix<T> x;  // block input
  Matrix<T> n1;
  std::vector<T> inv1;
  Matrix<T> qkv;
  Matrix<T> probs;  // batch*heads x seq*seq
  Matrix<T> att;
  Matrix<T> x2;  // after attention residual
  Matrix<T> n2;
  std::vector<T> inv2;
  Matrix<T> fc;
  Matrix<T> act;
};

template <typename T>
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;
  std::vector<BlockCache<T>> blocks;
  engram::EngramCache<T> engram;
  Matrix<T> x_final;  // input to the final norm
  Matrix<T> nf;
  std::vector<T> inv_f;
};

// Single-head scaled dot-product attention over seq x d_k matrices.
template <typename T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k,
                    const Matrix<T>& v, bool causal);

// Rows of h are [batch*seq x D]. Output is W_o concat(heads); the residual
// is added by the caller.
template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& h, const BlockParams<T>& w,
                               const ModelConfig& cfg, std::size_t batch,
                               std::size_t seq);

// Two-layer GELU MLP (no residual).
template <typename T>
Matrix<T> mlp_forward(const Matrix<T>& h, const BlockParams<T>& w);

// Full pre-norm block including both residuals.
template <typename T>
Matrix<T> block_forward(const Matrix<T>& x, const BlockParams<T>& w,
                        const ModelConfig& cfg, std::size_t batch,
                        std::size_t seq, BlockCache<T>* cache = nullptr);

template <typename T>
void block_backward(const Matrix<T>& dout, const BlockCache<T>& cache,
                    BlockParams<T>& w, const ModelConfig& cfg,
                    std::size_t batch, std::size_t seq, Matrix<T>& dx);

// Logits [batch*seq x V]. Throws OutOfRange for ids >= V or seq >
// context_len.
template <typename T>
Matrix<T> model_forward(const TokenBatch& tokens, const ModelParams<T>& params,
                        const ModelConfig& cfg,
                        ForwardCache<T>* cache = nullptr);

template <typename T>
void model_backward(const Matrix<T>& dlogits, const ForwardCache<T>& cache,
                    ModelParams<T>& params, const ModelConfig& cfg);

inline constexpr TokenId kIgnoreTarget = -1;

// Mean of -log softmax(logits)[target] over targets != kIgnoreTarget.
// When dlogits is given it receives the gradient of that mean.
// Throws DegenerateBatch when every target is ignored.
template <typename T>
T nll_loss(const Matrix<T>& logits, std::span<const TokenId> targets,
           Matrix<T>* dlogits = nullptr);

// Greedy (temperature 0) or sampled continuation, for smoke tests.
template <typename T>
std::vector<TokenId> generate(const ModelParams<T>& params,
                              const ModelConfig& cfg,
                              std::vector<TokenId> prompt, std::size_t steps,
                              double temperature, std::uint64_t seed);

}  // namespace toba::nn
