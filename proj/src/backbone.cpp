#include "toba/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "toba/common.hpp"
#include "toba/kernels.hpp"

namespace toba::nn {

void ModelConfig::validate() const {
  if (n_blocks < 1 || d_model < 1 || n_heads < 1 || vocab_size < 1 ||
      mlp_ratio < 1)
    throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (context_len < 3) throw ConfigError("context_len must be >= 3");
  if (!(init_std >= 0.0) || !(norm_eps > 0.0))
    throw ConfigError("init_std must be >= 0 and norm_eps > 0");
  if (engram) {
    engram->validate(n_blocks);
    if (static_cast<std::size_t>(engram->bos_id) >= vocab_size)
      throw ConfigError("engram bos_id outside vocabulary");
  }
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.n_blocks = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.context_len = 32;
  c.vocab_size = 64 + tok::kNumSpecials;
  c.mlp_ratio = 4;
  engram::EngramConfig e;
  e.table_size = 4096;
  e.dim = 8;
  e.heads = 2;
  e.insert_after_block = 1;
  c.engram = e;
  c.precision = Precision::float32;
  return c;
}

ModelConfig ModelConfig::full_1p2b() {
  ModelConfig c;
  c.n_blocks = 36;
  c.d_model = 1280;
  c.n_heads = 20;
  c.context_len = 1024;
  c.vocab_size = 2843;
  c.mlp_ratio = 4;
  engram::EngramConfig e;
  e.table_size = 500000;
  e.dim = 768;
  e.heads = 8;
  e.insert_after_block = 3;
  c.engram = e;
  // The reference run used bfloat16, which is not supported here.
  c.precision = Precision::float32;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
BlockParams<T>::BlockParams(const ModelConfig& cfg, std::size_t index) {
  const std::size_t D = cfg.d_model;
  const std::size_t H = cfg.mlp_ratio * D;
  const std::string p = "blocks." + std::to_string(index) + ".";
  const auto g = ParamGroup::backbone;
  ln1 = Param<T>(p + "ln1", g, 1, D);
  w_qkv = Param<T>(p + "w_qkv", g, D, 3 * D);
  w_attn_out = Param<T>(p + "w_attn_out", g, D, D);
  ln2 = Param<T>(p + "ln2", g, 1, D);
  w_fc = Param<T>(p + "w_fc", g, D, H);
  b_fc = Param<T>(p + "b_fc", g, 1, H);
  w_proj = Param<T>(p + "w_proj", g, H, D);
  b_proj = Param<T>(p + "b_proj", g, 1, D);
}

template <typename T>
ModelParams<T>::ModelParams(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.d_model;
  const auto g = ParamGroup::backbone;
  tok_emb = Param<T>("tok_emb", g, cfg.vocab_size, D);
  pos_emb = Param<T>("pos_emb", g, cfg.context_len, D);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) blocks.emplace_back(cfg, i);
  ln_f = Param<T>("ln_f", g, 1, D);
  if (!cfg.tie_embeddings) head = Param<T>("head", g, D, cfg.vocab_size);
  if (cfg.engram) engram.emplace(*cfg.engram, D);
}

template <typename T>
void ModelParams<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, 0);
  const double s = cfg.init_std;
  const double s_res = s / std::sqrt(2.0 * static_cast<double>(cfg.n_blocks));
  tok_emb.init_normal(rng, s);
  pos_emb.init_normal(rng, s);
  for (auto& b : blocks) {
    b.ln1.value.fill(T{1});
    b.w_qkv.init_normal(rng, s);
    b.w_attn_out.init_normal(rng, s_res);
    b.ln2.value.fill(T{1});
    b.w_fc.init_normal(rng, s);
    b.b_fc.value.fill(T{0});
    b.w_proj.init_normal(rng, s_res);
    b.b_proj.value.fill(T{0});
  }
  ln_f.value.fill(T{1});
  if (!head.value.empty()) {
    if (cfg.zero_init_head)
      head.value.fill(T{0});
    else
      head.init_normal(rng, s);
  }
  if (engram) {
    Rng erng(seed, 1);
    engram->init(erng, s);
  }
  zero_grad();
}

template <typename T>
void ModelParams<T>::zero_grad() {
  visit([](Param<T>& p) { p.zero_grad(); });
}

template <typename T>
std::size_t ModelParams<T>::num_parameters() const {
  std::size_t n = 0;
  visit([&](const Param<T>& p) { n += p.value.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// Row-wise helpers

namespace {

template <typename T>
void rmsnorm_rows(const Matrix<T>& x, std::span<const T> gain, T eps,
                  Matrix<T>& y, std::vector<T>& inv) {
  const std::size_t n = x.rows(), d = x.cols();
  y.resize(n, d);
  inv.assign(n, T{0});
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto xr = x.row(i);
    T ss{0};
    for (T v : xr) ss += v * v;
    const T r = T{1} / std::sqrt(ss / static_cast<T>(d) + eps);
    inv[i] = r;
    auto yr = y.row(i);
    for (std::size_t k = 0; k < d; ++k) yr[k] = gain[k] * xr[k] * r;
  }
}

// dx (+)= d rmsnorm / dx ^T dy ; dgain += ...
template <typename T>
void rmsnorm_rows_backward(const Matrix<T>& dy, const Matrix<T>& x,
                           const std::vector<T>& inv, std::span<const T> gain,
                           std::span<T> dgain, Matrix<T>& dx) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const auto xr = x.row(i);
    const auto dr = dy.row(i);
    auto out = dx.row(i);
    const T r = inv[i];
    T dot{0};
    for (std::size_t k = 0; k < d; ++k) {
      dgain[k] += dr[k] * xr[k] * r;
      dot += gain[k] * dr[k] * xr[k];
    }
    const T coef = r * r * r * dot / static_cast<T>(d);
    for (std::size_t k = 0; k < d; ++k)
      out[k] += r * gain[k] * dr[k] - coef * xr[k];
  }
}

template <typename T>
void add_bias(Matrix<T>& y, std::span<const T> b) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += b[k];
  }
}

template <typename T>
void colsum_accum(const Matrix<T>& y, std::span<T> out) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto r = y.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) out[k] += r[k];
  }
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

template <typename T>
T gelu(T x) {
  return T{0.5} * x *
         (T{1} + std::tanh(kGeluC<T> * (x + T{0.044715} * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T u = kGeluC<T> * (x + T{0.044715} * x * x * x);
  const T th = std::tanh(u);
  const T du = kGeluC<T> * (T{1} + T{3} * T{0.044715} * x * x);
  return T{0.5} * (T{1} + th) + T{0.5} * x * (T{1} - th * th) * du;
}

kernels::AttentionShape attention_shape(const ModelConfig& cfg,
                                        std::size_t batch, std::size_t seq) {
  return {batch, seq, cfg.n_heads, cfg.d_head()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Layers

template <typename T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                    bool causal) {
  require_shape(q.cols() == k.cols(), "attention: Q and K widths differ");
  require_shape(k.rows() == v.rows(), "attention: K and V lengths differ");
  require_shape(!causal || q.rows() == k.rows(),
                "attention: causal mask needs square scores");
  const std::size_t n = q.rows(), m = k.rows(), dk = q.cols();
  const T scale = T{1} / std::sqrt(static_cast<T>(dk));
  Matrix<T> out(n, v.cols());
  std::vector<T> w(m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t visible = causal ? i + 1 : m;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < visible; ++j) {
      T s{0};
      for (std::size_t d = 0; d < dk; ++d) s += q(i, d) * k(j, d);
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    T sum{0};
    for (std::size_t j = 0; j < visible; ++j) sum += (w[j] = std::exp(w[j] - mx));
    for (std::size_t j = 0; j < visible; ++j)
      for (std::size_t d = 0; d < v.cols(); ++d)
        out(i, d) += w[j] / sum * v(j, d);
  }
  return out;
}

template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& h, const BlockParams<T>& w,
                               const ModelConfig& cfg, std::size_t batch,
                               std::size_t seq) {
  const std::size_t D = cfg.d_model, N = batch * seq;
  require_shape(h.rows() == N && h.cols() == D, "multi_head_attention: input shape");
  require_shape(D % cfg.n_heads == 0, "multi_head_attention: D % heads != 0");
  Matrix<T> qkv(N, 3 * D);
  kernels::matmul<T>(h.span(), w.w_qkv.value.span(), qkv.span(), N, D, 3 * D);
  Matrix<T> att(N, D);
  Matrix<T> probs(batch * cfg.n_heads, seq * seq);
  kernels::attention_forward<T>(qkv.span(), att.span(), probs.span(),
                                attention_shape(cfg, batch, seq));
  Matrix<T> out(N, D);
  kernels::matmul<T>(att.span(), w.w_attn_out.value.span(), out.span(), N, D, D);
  return out;
}

template <typename T>
Matrix<T> mlp_forward(const Matrix<T>& h, const BlockParams<T>& w) {
  const std::size_t N = h.rows(), D = h.cols(), H = w.w_fc.value.cols();
  require_shape(w.w_fc.value.rows() == D && w.w_proj.value.cols() == D,
                "mlp_forward: weight shapes");
  Matrix<T> fc(N, H);
  kernels::matmul<T>(h.span(), w.w_fc.value.span(), fc.span(), N, D, H);
  add_bias(fc, w.b_fc.value.span());
  for (std::size_t i = 0; i < fc.size(); ++i) fc[i] = gelu(fc[i]);
  Matrix<T> out(N, D);
  kernels::matmul<T>(fc.span(), w.w_proj.value.span(), out.span(), N, H, D);
  add_bias(out, w.b_proj.value.span());
  return out;
}

template <typename T>
Matrix<T> block_forward(const Matrix<T>& x, const BlockParams<T>& w,
                        const ModelConfig& cfg, std::size_t batch,
                        std::size_t seq, BlockCache<T>* cache) {
  const std::size_t D = cfg.d_model, N = batch * seq;
  const std::size_t H = cfg.mlp_ratio * D;
  require_shape(x.rows() == N && x.cols() == D, "block_forward: input shape");
  const T eps = static_cast<T>(cfg.norm_eps);
  BlockCache<T> local;
  BlockCache<T>& c = cache ? *cache : local;

  c.x = x;
  rmsnorm_rows<T>(x, w.ln1.value.span(), eps, c.n1, c.inv1);
  c.qkv.resize(N, 3 * D);
  kernels::matmul<T>(c.n1.span(), w.w_qkv.value.span(), c.qkv.span(), N, D,
                     3 * D);
  c.att.resize(N, D);
  c.probs.resize(batch * cfg.n_heads, seq * seq);
  kernels::attention_forward<T>(c.qkv.span(), c.att.span(), c.probs.span(),
                                attention_shape(cfg, batch, seq));
  c.x2 = x;
  kernels::matmul<T>(c.att.span(), w.w_attn_out.value.span(), c.x2.span(), N,
                     D, D, /*accumulate=*/true);

  rmsnorm_rows<T>(c.x2, w.ln2.value.span(), eps, c.n2, c.inv2);
  c.fc.resize(N, H);
  kernels::matmul<T>(c.n2.span(), w.w_fc.value.span(), c.fc.span(), N, D, H);
  add_bias(c.fc, w.b_fc.value.span());
  c.act.resize(N, H);
  for (std::size_t i = 0; i < c.fc.size(); ++i) c.act[i] = gelu(c.fc[i]);

  Matrix<T> out = c.x2;
  Matrix<T> m(N, D);
  kernels::matmul<T>(c.act.span(), w.w_proj.value.span(), m.span(), N, H, D);
  add_bias(m, w.b_proj.value.span());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  return out;
}

template <typename T>
void block_backward(const Matrix<T>& dout, const BlockCache<T>& c,
                    BlockParams<T>& w, const ModelConfig& cfg,
                    std::size_t batch, std::size_t seq, Matrix<T>& dx) {
  const std::size_t D = cfg.d_model, N = batch * seq;
  const std::size_t H = cfg.mlp_ratio * D;

  // MLP branch
  kernels::matmul_tn_accum<T>(c.act.span(), dout.span(), w.w_proj.grad.span(),
                              N, H, D);
  colsum_accum(dout, w.b_proj.grad.span());
  Matrix<T> dfc(N, H);
  kernels::matmul_nt<T>(dout.span(), w.w_proj.value.span(), dfc.span(), N, D, H);
  for (std::size_t i = 0; i < dfc.size(); ++i) dfc[i] *= gelu_grad(c.fc[i]);
  kernels::matmul_tn_accum<T>(c.n2.span(), dfc.span(), w.w_fc.grad.span(), N,
                              D, H);
  colsum_accum(dfc, w.b_fc.grad.span());
  Matrix<T> dn2(N, D);
  kernels::matmul_nt<T>(dfc.span(), w.w_fc.value.span(), dn2.span(), N, H, D);
  Matrix<T> dx2 = dout;
  rmsnorm_rows_backward<T>(dn2, c.x2, c.inv2, w.ln2.value.span(), w.ln2.grad.span(),
                        dx2);

  // Attention branch
  kernels::matmul_tn_accum<T>(c.att.span(), dx2.span(),
                              w.w_attn_out.grad.span(), N, D, D);
  Matrix<T> datt(N, D);
  kernels::matmul_nt<T>(dx2.span(), w.w_attn_out.value.span(), datt.span(), N,
                        D, D);
  Matrix<T> dqkv(N, 3 * D);
  kernels::attention_backward<T>(c.qkv.span(), c.probs.span(), datt.span(),
                                 dqkv.span(), attention_shape(cfg, batch, seq));
  kernels::matmul_tn_accum<T>(c.n1.span(), dqkv.span(), w.w_qkv.grad.span(), N,
                              D, 3 * D);
  Matrix<T> dn1(N, D);
  kernels::matmul_nt<T>(dqkv.span(), w.w_qkv.value.span(), dn1.span(), N,
                        3 * D, D);
  dx = dx2;
  rmsnorm_rows_backward<T>(dn1, c.x, c.inv1, w.ln1.value.span(), w.ln1.grad.span(),
                        dx);
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Matrix<T> model_forward(const TokenBatch& tokens, const ModelParams<T>& params,
                        const ModelConfig& cfg, ForwardCache<T>* cache) {
  const std::size_t B = tokens.batch, S = tokens.seq, D = cfg.d_model;
  const std::size_t V = cfg.vocab_size, N = B * S;
  require_shape(tokens.ids.size() == N, "model_forward: ids size != batch*seq");
  if (S > cfg.context_len)
    throw OutOfRange("model_forward: sequence longer than context_len");
  for (TokenId id : tokens.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw OutOfRange("model_forward: token id " + std::to_string(id) +
                       " outside vocabulary");
  require_shape(params.blocks.size() == cfg.n_blocks &&
                    params.engram.has_value() == cfg.engram.has_value(),
                "model_forward: params do not match config");

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.batch = B;
  c.seq = S;
  c.ids = tokens.ids;
  c.blocks.resize(cfg.n_blocks);

  Matrix<T> x(N, D);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < S; ++t) {
      const auto id = static_cast<std::size_t>(tokens.ids[b * S + t]);
      auto xr = x.row(b * S + t);
      const auto te = params.tok_emb.value.row(id);
      const auto pe = params.pos_emb.value.row(t);
      for (std::size_t k = 0; k < D; ++k) xr[k] = te[k] + pe[k];
    }

  auto apply_engram = [&](std::size_t after) {
    if (!cfg.engram || cfg.engram->insert_after_block != after) return;
    Matrix<T> y;
    engram::layer_forward<T>(x, tokens.ids, B, S, *params.engram, *cfg.engram,
                             y, &c.engram);
    x = std::move(y);
  };

  apply_engram(0);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    x = block_forward(x, params.blocks[i], cfg, B, S, &c.blocks[i]);
    apply_engram(i + 1);
  }

  c.x_final = x;
  rmsnorm_rows<T>(x, params.ln_f.value.span(), static_cast<T>(cfg.norm_eps), c.nf,
               c.inv_f);
  Matrix<T> logits(N, V);
  if (cfg.tie_embeddings)
    kernels::matmul_nt<T>(c.nf.span(), params.tok_emb.value.span(),
                          logits.span(), N, D, V);
  else
    kernels::matmul<T>(c.nf.span(), params.head.value.span(), logits.span(), N,
                       D, V);
  return logits;
}

template <typename T>
void model_backward(const Matrix<T>& dlogits, const ForwardCache<T>& c,
                    ModelParams<T>& params, const ModelConfig& cfg) {
  const std::size_t B = c.batch, S = c.seq, D = cfg.d_model;
  const std::size_t V = cfg.vocab_size, N = B * S;
  require_shape(dlogits.rows() == N && dlogits.cols() == V,
                "model_backward: dlogits shape");

  Matrix<T> dnf(N, D);
  if (cfg.tie_embeddings) {
    // logits = nf E^T : dE += dlogits^T nf
    kernels::matmul_tn_accum<T>(dlogits.span(), c.nf.span(),
                                params.tok_emb.grad.span(), N, V, D);
    kernels::matmul<T>(dlogits.span(), params.tok_emb.value.span(), dnf.span(),
                       N, V, D);
  } else {
    kernels::matmul_tn_accum<T>(c.nf.span(), dlogits.span(),
                                params.head.grad.span(), N, D, V);
    kernels::matmul_nt<T>(dlogits.span(), params.head.value.span(), dnf.span(),
                          N, V, D);
  }
  Matrix<T> dx(N, D);
  rmsnorm_rows_backward<T>(dnf, c.x_final, c.inv_f, params.ln_f.value.span(),
                        params.ln_f.grad.span(), dx);

  auto engram_back = [&](std::size_t after) {
    if (!cfg.engram || cfg.engram->insert_after_block != after) return;
    Matrix<T> dh;
    engram::layer_backward<T>(dx, c.engram, *params.engram, *cfg.engram, dh);
    dx = std::move(dh);
  };

  for (std::size_t i = cfg.n_blocks; i-- > 0;) {
    engram_back(i + 1);
    Matrix<T> dprev;
    block_backward(dx, c.blocks[i], params.blocks[i], cfg, B, S, dprev);
    dx = std::move(dprev);
  }
  engram_back(0);

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < S; ++t) {
      const auto id = static_cast<std::size_t>(c.ids[b * S + t]);
      const auto g = dx.row(b * S + t);
      auto te = params.tok_emb.grad.row(id);
      auto pe = params.pos_emb.grad.row(t);
      for (std::size_t k = 0; k < D; ++k) {
        te[k] += g[k];
        pe[k] += g[k];
      }
    }
}

template <typename T>
T nll_loss(const Matrix<T>& logits, std::span<const TokenId> targets,
           Matrix<T>* dlogits) {
  const std::size_t N = logits.rows(), V = logits.cols();
  require_shape(targets.size() == N, "nll_loss: targets size != rows");
  std::size_t count = 0;
  for (TokenId t : targets) {
    if (t == kIgnoreTarget) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V)
      throw OutOfRange("nll_loss: target outside vocabulary");
    ++count;
  }
  if (count == 0) throw DegenerateBatch("nll_loss: every position is masked");
  if (dlogits) dlogits->resize(N, V);

  // Accumulate in double so the mean does not depend on T's rounding.
  double total = 0.0;
  const T inv_count = T{1} / static_cast<T>(count);
  for (std::size_t i = 0; i < N; ++i) {
    if (targets[i] == kIgnoreTarget) continue;
    const auto row = logits.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum{0};
    for (T v : row) sum += std::exp(v - mx);
    const T lse = mx + std::log(sum);
    const auto tgt = static_cast<std::size_t>(targets[i]);
    total += static_cast<double>(lse - row[tgt]);
    if (dlogits) {
      auto d = dlogits->row(i);
      for (std::size_t v = 0; v < V; ++v)
        d[v] = std::exp(row[v] - lse) * inv_count;
      d[tgt] -= inv_count;
    }
  }
  return static_cast<T>(total / static_cast<double>(count));
}

template <typename T>
std::vector<TokenId> generate(const ModelParams<T>& params,
                              const ModelConfig& cfg,
                              std::vector<TokenId> prompt, std::size_t steps,
                              double temperature, std::uint64_t seed) {
  if (prompt.empty()) prompt.push_back(tok::kBosId);
  Rng rng(seed);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t len = std::min(prompt.size(), cfg.context_len);
    TokenBatch tb{1, len, {prompt.end() - static_cast<std::ptrdiff_t>(len), prompt.end()}};
    const Matrix<T> logits = model_forward(tb, params, cfg);
    const auto last = logits.row(len - 1);
    std::size_t pick = 0;
    if (temperature <= 0.0) {
      pick = static_cast<std::size_t>(
          std::max_element(last.begin(), last.end()) - last.begin());
    } else {
      const double mx = static_cast<double>(*std::max_element(last.begin(), last.end()));
      std::vector<double> w(last.size());
      double sum = 0.0;
      for (std::size_t v = 0; v < w.size(); ++v)
        sum += (w[v] = std::exp((static_cast<double>(last[v]) - mx) / temperature));
      double u = rng.uniform() * sum;
      for (pick = 0; pick + 1 < w.size() && u >= w[pick]; ++pick) u -= w[pick];
    }
    prompt.push_back(static_cast<TokenId>(pick));
  }
  return prompt;
}

#define TOBA_INSTANTIATE_BACKBONE(T)                                          \
  template struct BlockParams<T>;                                             \
  template struct ModelParams<T>;                                             \
  template Matrix<T> attention<T>(const Matrix<T>&, const Matrix<T>&,         \
                                  const Matrix<T>&, bool);                    \
  template Matrix<T> multi_head_attention<T>(const Matrix<T>&,                \
                                             const BlockParams<T>&,           \
                                             const ModelConfig&, std::size_t, \
                                             std::size_t);                    \
  template Matrix<T> mlp_forward<T>(const Matrix<T>&, const BlockParams<T>&); \
  template Matrix<T> block_forward<T>(const Matrix<T>&, const BlockParams<T>&, \
                                      const ModelConfig&, std::size_t,        \
                                      std::size_t, BlockCache<T>*);           \
  template void block_backward<T>(const Matrix<T>&, const BlockCache<T>&,     \
                                  BlockParams<T>&, const ModelConfig&,        \
                                  std::size_t, std::size_t, Matrix<T>&);      \
  template Matrix<T> model_forward<T>(const TokenBatch&,                      \
                                      const ModelParams<T>&,                  \
                                      const ModelConfig&, ForwardCache<T>*);  \
  template void model_backward<T>(const Matrix<T>&, const ForwardCache<T>&,   \
                                  ModelParams<T>&, const ModelConfig&);       \
  template T nll_loss<T>(const Matrix<T>&, std::span<const TokenId>,          \
                         Matrix<T>*);                                         \
  template std::vector<TokenId> generate<T>(                                  \
      const ModelParams<T>&, const ModelConfig&, std::vector<TokenId>,        \
      std::size_t, double, std::uint64_t);

TOBA_INSTANTIATE_BACKBONE(float)
TOBA_INSTANTIATE_BACKBONE(double)

}  // namespace toba::nn
