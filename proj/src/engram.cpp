#include "toba/engram.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "toba/common.hpp"
#include "toba/kernels.hpp"

namespace toba::engram {

void EngramConfig::validate(std::size_t n_blocks) const {
  if (table_size < 1) throw ConfigError("engram table_size must be >= 1");
  if (dim < 1 || heads < 1) throw ConfigError("engram dim and heads must be >= 1");
  if (dim % heads != 0) throw ConfigError("engram dim must be divisible by heads");
  if (insert_after_block > n_blocks)
    throw ConfigError("engram insert_after_block exceeds n_blocks");
  if (!(rms_eps > 0.0)) throw ConfigError("engram rms_eps must be > 0");
  if (bos_id < 0) throw ConfigError("engram bos_id must be >= 0");
}

template <typename T>
EngramParams<T>::EngramParams(const EngramConfig& cfg, std::size_t d_model)
    : table("engram.table", ParamGroup::engram, cfg.table_size, cfg.dim),
      w_q("engram.w_q", ParamGroup::engram, d_model, cfg.dim),
      w_o("engram.w_o", ParamGroup::engram, cfg.dim, d_model),
      w_g("engram.w_g", ParamGroup::engram, d_model, cfg.heads),
      rms_gain("engram.rms_gain", ParamGroup::engram, 1, cfg.dim) {
  rms_gain.value.fill(T{1});
}

template <typename T>
void EngramParams<T>::init(Rng& rng, double stddev) {
  table.value.fill(T{0});
  w_q.init_normal(rng, stddev);
  w_o.init_normal(rng, stddev);
  w_g.init_normal(rng, stddev);
  rms_gain.value.fill(T{1});
}

namespace {

TokenId at_or_bos(std::span<const TokenId> tokens, std::size_t t,
                  std::size_t back, TokenId bos_id) {
  return t >= back ? tokens[t - back] : bos_id;
}

std::uint64_t as_key(TokenId id) { return static_cast<std::uint64_t>(id); }

}  // namespace

std::size_t bigram_row(std::span<const TokenId> tokens, std::size_t t,
                       std::size_t table_size, TokenId bos_id) {
  return hash_bigram(as_key(at_or_bos(tokens, t, 1, bos_id)), as_key(tokens[t]),
                     table_size);
}

std::size_t trigram_row(std::span<const TokenId> tokens, std::size_t t,
                        std::size_t table_size, TokenId bos_id) {
  return hash_trigram(as_key(at_or_bos(tokens, t, 2, bos_id)),
                      as_key(at_or_bos(tokens, t, 1, bos_id)),
                      as_key(tokens[t]), table_size);
}

template <typename T>
std::vector<T> lookup_bigram(std::span<const TokenId> tokens, std::size_t t,
                             const Matrix<T>& table, TokenId bos_id) {
  if (t >= tokens.size()) throw OutOfRange("lookup_bigram: position past end");
  const auto row = table.row(bigram_row(tokens, t, table.rows(), bos_id));
  return {row.begin(), row.end()};
}

template <typename T>
std::vector<T> lookup_trigram(std::span<const TokenId> tokens, std::size_t t,
                              const Matrix<T>& table, TokenId bos_id) {
  if (t >= tokens.size()) throw OutOfRange("lookup_trigram: position past end");
  const auto row = table.row(trigram_row(tokens, t, table.rows(), bos_id));
  return {row.begin(), row.end()};
}

namespace {

template <typename T>
T inverse_rms(std::span<const T> x, T eps) {
  T ss{0};
  for (T v : x) ss += v * v;
  return T{1} / std::sqrt(ss / static_cast<T>(x.size()) + eps);
}

}  // namespace

template <typename T>
std::vector<T> rmsnorm(std::span<const T> x, std::span<const T> gain, T eps) {
  require_shape(x.size() == gain.size(), "rmsnorm: gain length mismatch");
  std::vector<T> y(x.size());
  if (x.empty()) return y;
  const T inv = inverse_rms(x, eps);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] * inv;
  return y;
}

template <typename T>
T relevance_score(std::span<const T> q, std::span<const T> e) {
  require_shape(q.size() == e.size() && !q.empty(),
                "relevance_score: query and memory lengths differ");
  T dot{0};
  for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * e[i];
  return dot / std::sqrt(static_cast<T>(q.size()));
}

template <typename T>
std::vector<T> gate(std::span<const T> h, const Matrix<T>& w_g) {
  require_shape(h.size() == w_g.rows(), "gate: W_g rows must equal |h|");
  std::vector<T> g(w_g.cols(), T{0});
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += h[i] * w_g(i, j);
  for (auto& v : g) v = sigmoid(v);
  return g;
}

namespace {

template <typename T>
void check_shapes(const EngramParams<T>& p, const EngramConfig& cfg,
                  std::size_t d_model) {
  require_shape(cfg.dim % cfg.heads == 0, "engram: d_e not divisible by H");
  require_shape(p.table.value.rows() == cfg.table_size &&
                    p.table.value.cols() == cfg.dim,
                "engram: table shape");
  require_shape(p.w_q.value.rows() == d_model && p.w_q.value.cols() == cfg.dim,
                "engram: W_q shape");
  require_shape(p.w_o.value.rows() == cfg.dim && p.w_o.value.cols() == d_model,
                "engram: W_o shape");
  require_shape(
      p.w_g.value.rows() == d_model && p.w_g.value.cols() == cfg.heads,
      "engram: W_g shape");
  require_shape(p.rms_gain.value.size() == cfg.dim, "engram: rms_gain shape");
}

template <typename T>
void allocate(EngramCache<T>& c, std::size_t n, std::size_t d_model,
              const EngramConfig& cfg) {
  c.positions = n;
  c.row2.assign(n, 0);
  c.row3.assign(n, 0);
  c.input.resize(n, d_model);
  c.q.resize(n, cfg.dim);
  c.x2.resize(n, cfg.dim);
  c.x3.resize(n, cfg.dim);
  c.inv2.assign(n, T{0});
  c.inv3.assign(n, T{0});
  c.e2.resize(n, cfg.dim);
  c.e3.resize(n, cfg.dim);
  c.alpha2.resize(n, cfg.heads);
  c.alpha3.resize(n, cfg.heads);
  c.g.resize(n, cfg.heads);
  c.mixed.resize(n, cfg.dim);
  c.gated.resize(n, cfg.dim);
}

// Fills row i of the cache from q (already in c.q), the gate
// pre-activations and the two table rows.
template <typename T>
void position_forward(std::span<const T> gate_pre, const EngramParams<T>& p,
                      const EngramConfig& cfg, EngramCache<T>& c,
                      std::size_t i) {
  const std::size_t de = cfg.dim;
  const std::size_t dh = cfg.head_dim();
  const T eps = static_cast<T>(cfg.rms_eps);
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const auto gain = p.rms_gain.value.span();

  auto x2 = c.x2.row(i);
  auto x3 = c.x3.row(i);
  std::ranges::copy(p.table.value.row(c.row2[i]), x2.begin());
  std::ranges::copy(p.table.value.row(c.row3[i]), x3.begin());
  c.inv2[i] = inverse_rms<T>(x2, eps);
  c.inv3[i] = inverse_rms<T>(x3, eps);
  auto e2 = c.e2.row(i);
  auto e3 = c.e3.row(i);
  for (std::size_t k = 0; k < de; ++k) {
    e2[k] = gain[k] * x2[k] * c.inv2[i];
    e3[k] = gain[k] * x3[k] * c.inv3[i];
  }
  const auto q = c.q.row(i);
  auto mixed = c.mixed.row(i);
  auto gated = c.gated.row(i);
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    const std::size_t o = j * dh;
    T s2{0}, s3{0};
    for (std::size_t k = o; k < o + dh; ++k) {
      s2 += q[k] * e2[k];
      s3 += q[k] * e3[k];
    }
    s2 *= scale;
    s3 *= scale;
    const T mx = std::max(s2, s3);
    const T w2 = std::exp(s2 - mx);
    const T w3 = std::exp(s3 - mx);
    const T a2 = w2 / (w2 + w3);
    const T a3 = w3 / (w2 + w3);
    const T g = sigmoid(gate_pre[j]);
    c.alpha2(i, j) = a2;
    c.alpha3(i, j) = a3;
    c.g(i, j) = g;
    for (std::size_t k = o; k < o + dh; ++k) {
      mixed[k] = a2 * e2[k] + a3 * e3[k];
      gated[k] = g * mixed[k];
    }
  }
}

}  // namespace

template <typename T>
std::vector<T> engram_forward(std::span<const T> h,
                              std::span<const TokenId> tokens, std::size_t t,
                              const EngramParams<T>& params,
                              const EngramConfig& cfg) {
  const std::size_t D = h.size();
  check_shapes(params, cfg, D);
  if (t >= tokens.size()) throw OutOfRange("engram_forward: position past end");

  EngramCache<T> c;
  allocate(c, 1, D, cfg);
  c.row2[0] = bigram_row(tokens, t, cfg.table_size, cfg.bos_id);
  c.row3[0] = trigram_row(tokens, t, cfg.table_size, cfg.bos_id);
  kernels::serial::matmul<T>(h, params.w_q.value.span(), c.q.span(), 1, D,
                             cfg.dim);
  std::vector<T> pre(cfg.heads);
  kernels::serial::matmul<T>(h, params.w_g.value.span(), pre, 1, D, cfg.heads);
  position_forward<T>(pre, params, cfg, c, 0);

  std::vector<T> out(h.begin(), h.end());
  kernels::serial::matmul<T>(c.gated.span(), params.w_o.value.span(), out, 1,
                             cfg.dim, D, /*accumulate=*/true);
  return out;
}

template <typename T>
void layer_forward(const Matrix<T>& h, std::span<const TokenId> tokens,
                   std::size_t batch, std::size_t seq,
                   const EngramParams<T>& params, const EngramConfig& cfg,
                   Matrix<T>& out, EngramCache<T>* cache) {
  const std::size_t N = batch * seq;
  const std::size_t D = h.cols();
  require_shape(h.rows() == N, "engram layer: hidden rows != batch*seq");
  require_shape(tokens.size() == N, "engram layer: token count != batch*seq");
  check_shapes(params, cfg, D);

  EngramCache<T> local;
  EngramCache<T>& c = cache ? *cache : local;
  allocate(c, N, D, cfg);
  c.input = h;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto seq_tokens = tokens.subspan(b * seq, seq);
    for (std::size_t t = 0; t < seq; ++t) {
      c.row2[b * seq + t] = bigram_row(seq_tokens, t, cfg.table_size, cfg.bos_id);
      c.row3[b * seq + t] = trigram_row(seq_tokens, t, cfg.table_size, cfg.bos_id);
    }
  }
  kernels::matmul<T>(h.span(), params.w_q.value.span(), c.q.span(), N, D,
                     cfg.dim);
  Matrix<T> pre(N, cfg.heads);
  kernels::matmul<T>(h.span(), params.w_g.value.span(), pre.span(), N, D,
                     cfg.heads);
  const auto n = static_cast<std::int64_t>(N);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    position_forward<T>(pre.row(static_cast<std::size_t>(i)), params, cfg, c,
                        static_cast<std::size_t>(i));

  out = h;
  kernels::matmul<T>(c.gated.span(), params.w_o.value.span(), out.span(), N,
                     cfg.dim, D, /*accumulate=*/true);
}

template <typename T>
void layer_backward(const Matrix<T>& dout, const EngramCache<T>& c,
                    EngramParams<T>& p, const EngramConfig& cfg,
                    Matrix<T>& dh) {
  const std::size_t N = c.positions;
  const std::size_t D = c.input.cols();
  const std::size_t de = cfg.dim;
  const std::size_t dh_ = cfg.head_dim();
  require_shape(dout.rows() == N && dout.cols() == D,
                "engram backward: grad shape");
  const T scale = T{1} / std::sqrt(static_cast<T>(dh_));
  const auto gain = p.rms_gain.value.span();

  // out = h + gated W_o
  kernels::matmul_tn_accum<T>(c.gated.span(), dout.span(), p.w_o.grad.span(),
                              N, de, D);
  Matrix<T> dgated(N, de);
  kernels::matmul_nt<T>(dout.span(), p.w_o.value.span(), dgated.span(), N, D,
                        de);

  Matrix<T> dq(N, de);
  Matrix<T> dpre(N, cfg.heads);
  Matrix<T> de2(N, de);
  Matrix<T> de3(N, de);
  const auto n = static_cast<std::int64_t>(N);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto q = c.q.row(i);
    const auto e2 = c.e2.row(i);
    const auto e3 = c.e3.row(i);
    const auto m = c.mixed.row(i);
    const auto dgr = dgated.row(i);
    auto dqr = dq.row(i);
    auto d2 = de2.row(i);
    auto d3 = de3.row(i);
    for (std::size_t j = 0; j < cfg.heads; ++j) {
      const std::size_t o = j * dh_;
      const T g = c.g(i, j);
      const T a2 = c.alpha2(i, j);
      const T a3 = c.alpha3(i, j);
      T dg{0}, da2{0}, da3{0};
      for (std::size_t k = o; k < o + dh_; ++k) {
        dg += dgr[k] * m[k];
        const T dm = g * dgr[k];
        da2 += dm * e2[k];
        da3 += dm * e3[k];
        d2[k] = a2 * dm;
        d3[k] = a3 * dm;
      }
      const T avg = a2 * da2 + a3 * da3;
      const T ds2 = a2 * (da2 - avg) * scale;
      const T ds3 = a3 * (da3 - avg) * scale;
      for (std::size_t k = o; k < o + dh_; ++k) {
        dqr[k] = ds2 * e2[k] + ds3 * e3[k];
        d2[k] += ds2 * q[k];
        d3[k] += ds3 * q[k];
      }
      dpre(i, j) = dg * g * (T{1} - g);
    }
  }

  // RMSNorm backward and the scatter into table rows. Serial, in position
  // order, so accumulation is race-free and deterministic.
  auto& dgain = p.rms_gain.grad;
  std::vector<T> dx(de);
  auto scatter = [&](const Matrix<T>& x, const std::vector<T>& inv,
                     const Matrix<T>& dnorm, const std::vector<std::size_t>& rows,
                     std::size_t i) {
    const auto xr = x.row(i);
    const auto dn = dnorm.row(i);
    const T r = inv[i];
    T dot{0};
    for (std::size_t k = 0; k < de; ++k) {
      dgain[k] += dn[k] * xr[k] * r;
      dot += gain[k] * dn[k] * xr[k];
    }
    const T coef = r * r * r * dot / static_cast<T>(de);
    auto trow = p.table.grad.row(rows[i]);
    for (std::size_t k = 0; k < de; ++k)
      trow[k] += r * gain[k] * dn[k] - coef * xr[k];
  };
  for (std::size_t i = 0; i < N; ++i) {
    scatter(c.x2, c.inv2, de2, c.row2, i);
    scatter(c.x3, c.inv3, de3, c.row3, i);
  }

  kernels::matmul_tn_accum<T>(c.input.span(), dq.span(), p.w_q.grad.span(), N,
                              D, de);
  kernels::matmul_tn_accum<T>(c.input.span(), dpre.span(), p.w_g.grad.span(),
                              N, D, cfg.heads);
  dh = dout;
  kernels::matmul_nt<T>(dq.span(), p.w_q.value.span(), dh.span(), N, de, D,
                        /*accumulate=*/true);
  kernels::matmul_nt<T>(dpre.span(), p.w_g.value.span(), dh.span(), N,
                        cfg.heads, D, /*accumulate=*/true);
}

#define TOBA_INSTANTIATE_ENGRAM(T)                                            \
  template struct EngramParams<T>;                                            \
  template std::vector<T> lookup_bigram<T>(std::span<const TokenId>,          \
                                           std::size_t, const Matrix<T>&,     \
                                           TokenId);                          \
  template std::vector<T> lookup_trigram<T>(std::span<const TokenId>,         \
                                            std::size_t, const Matrix<T>&,    \
                                            TokenId);                         \
  template std::vector<T> rmsnorm<T>(std::span<const T>, std::span<const T>,  \
                                     T);                                      \
  template T relevance_score<T>(std::span<const T>, std::span<const T>);      \
  template std::vector<T> gate<T>(std::span<const T>, const Matrix<T>&);      \
  template std::vector<T> engram_forward<T>(                                  \
      std::span<const T>, std::span<const TokenId>, std::size_t,              \
      const EngramParams<T>&, const EngramConfig&);                           \
  template void layer_forward<T>(const Matrix<T>&, std::span<const TokenId>,  \
                                 std::size_t, std::size_t,                    \
                                 const EngramParams<T>&, const EngramConfig&, \
                                 Matrix<T>&, EngramCache<T>*);                \
  template void layer_backward<T>(const Matrix<T>&, const EngramCache<T>&,    \
                                  EngramParams<T>&, const EngramConfig&,      \
                                  Matrix<T>&);

TOBA_INSTANTIATE_ENGRAM(float)
TOBA_INSTANTIATE_ENGRAM(double)

}  // namespace toba::engram
