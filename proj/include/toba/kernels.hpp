#pragma once

// Dense kernels used by the model. Every kernel exists twice: a serial
// reference and an OpenMP version. Both accumulate each output element in
// the same order, so their results are bit-identical; the parallel versions
// only split work across independent output rows or (batch, head) pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace toba::kernels {

// Layout shared by the attention kernels: qkv rows are [q | k | v], each of
// width d_model, and head h owns columns [h*d_head, (h+1)*d_head) of each.
struct AttentionShape {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::size_t n_heads = 0;
  std::size_t d_head = 0;
  std::size_t d_model() const { return n_heads * d_head; }
};

namespace detail {

template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, std::size_t k,
                       std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + m, T{0});
  for (std::size_t p = 0; p < k; ++p) {
    const T ap = a[p];
    const T* brow = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c[j] += ap * brow[j];
  }
}

template <typename T>
inline void matmul_tn_row(const T* a, const T* b, T* c, std::size_t i,
                          std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t r = 0; r < n; ++r) {
    const T ai = a[r * k + i];
    const T* brow = b + r * m;
    for (std::size_t j = 0; j < m; ++j) c[j] += ai * brow[j];
  }
}

template <typename T>
inline void matmul_nt_row(const T* a, const T* b, T* c, std::size_t m,
                          std::size_t k, bool accumulate) {
  for (std::size_t j = 0; j < k; ++j) {
    const T* brow = b + j * m;
    T s{0};
    for (std::size_t p = 0; p < m; ++p) s += a[p] * brow[p];
    c[j] = accumulate ? c[j] + s : s;
  }
}

// Forward attention for one (batch, head) pair.
template <typename T>
void attention_head_forward(const T* qkv, T* out, T* probs,
                            const AttentionShape& s, std::size_t b,
                            std::size_t h) {
  const std::size_t D = s.d_model();
  const std::size_t stride = 3 * D;
  const T scale = T{1} / std::sqrt(static_cast<T>(s.d_head));
  const std::size_t qoff = h * s.d_head;
  const std::size_t koff = D + h * s.d_head;
  const std::size_t voff = 2 * D + h * s.d_head;
  T* P = probs + (b * s.n_heads + h) * s.seq * s.seq;
  for (std::size_t i = 0; i < s.seq; ++i) {
    const T* q = qkv + (b * s.seq + i) * stride + qoff;
    T* prow = P + i * s.seq;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      const T* kr = qkv + (b * s.seq + j) * stride + koff;
      T dot{0};
      for (std::size_t d = 0; d < s.d_head; ++d) dot += q[d] * kr[d];
      prow[j] = dot * scale;
      mx = std::max(mx, prow[j]);
    }
    T sum{0};
    for (std::size_t j = 0; j <= i; ++j) {
      prow[j] = std::exp(prow[j] - mx);
      sum += prow[j];
    }
    const T inv = T{1} / sum;
    for (std::size_t j = 0; j <= i; ++j) prow[j] *= inv;
    for (std::size_t j = i + 1; j < s.seq; ++j) prow[j] = T{0};

    T* o = out + (b * s.seq + i) * D + h * s.d_head;
    std::fill(o, o + s.d_head, T{0});
    for (std::size_t j = 0; j <= i; ++j) {
      const T* v = qkv + (b * s.seq + j) * stride + voff;
      const T p = prow[j];
      for (std::size_t d = 0; d < s.d_head; ++d) o[d] += p * v[d];
    }
  }
}

// Backward attention for one (batch, head) pair. Writes (not accumulates)
// the q, k and v gradient columns owned by this pair.
template <typename T>
void attention_head_backward(const T* qkv, const T* probs, const T* dout,
                             T* dqkv, T* scratch, const AttentionShape& s,
                             std::size_t b, std::size_t h) {
  const std::size_t D = s.d_model();
  const std::size_t stride = 3 * D;
  const T scale = T{1} / std::sqrt(static_cast<T>(s.d_head));
  const std::size_t qoff = h * s.d_head;
  const std::size_t koff = D + h * s.d_head;
  const std::size_t voff = 2 * D + h * s.d_head;
  const T* P = probs + (b * s.n_heads + h) * s.seq * s.seq;

  for (std::size_t i = 0; i < s.seq; ++i) {
    T* row = dqkv + (b * s.seq + i) * stride;
    std::fill(row + qoff, row + qoff + s.d_head, T{0});
    std::fill(row + koff, row + koff + s.d_head, T{0});
    std::fill(row + voff, row + voff + s.d_head, T{0});
  }
  T* dp = scratch;  // length seq
  for (std::size_t i = 0; i < s.seq; ++i) {
    const T* prow = P + i * s.seq;
    const T* go = dout + (b * s.seq + i) * D + h * s.d_head;
    // dP = dO V^T and dV += P^T dO
    T dot_pdp{0};
    for (std::size_t j = 0; j <= i; ++j) {
      const T* v = qkv + (b * s.seq + j) * stride + voff;
      T* dv = dqkv + (b * s.seq + j) * stride + voff;
      T acc{0};
      for (std::size_t d = 0; d < s.d_head; ++d) {
        acc += go[d] * v[d];
        dv[d] += prow[j] * go[d];
      }
      dp[j] = acc;
      dot_pdp += prow[j] * acc;
    }
    const T* q = qkv + (b * s.seq + i) * stride + qoff;
    T* dq = dqkv + (b * s.seq + i) * stride + qoff;
    for (std::size_t j = 0; j <= i; ++j) {
      const T ds = prow[j] * (dp[j] - dot_pdp) * scale;
      const T* kr = qkv + (b * s.seq + j) * stride + koff;
      T* dk = dqkv + (b * s.seq + j) * stride + koff;
      for (std::size_t d = 0; d < s.d_head; ++d) {
        dq[d] += ds * kr[d];
        dk[d] += ds * q[d];
      }
    }
  }
}

}  // namespace detail

namespace serial {

// c[n x m] (+)= a[n x k] * b[k x m]
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c,
            std::size_t n, std::size_t k, std::size_t m,
            bool accumulate = false) {
  for (std::size_t i = 0; i < n; ++i)
    detail::matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m,
                       accumulate);
}

// c[k x m] += a[n x k]^T * b[n x m]
template <typename T>
void matmul_tn_accum(std::span<const T> a, std::span<const T> b,
                     std::span<T> c, std::size_t n, std::size_t k,
                     std::size_t m) {
  for (std::size_t i = 0; i < k; ++i)
    detail::matmul_tn_row(a.data(), b.data(), c.data() + i * m, i, n, k, m);
}

// c[n x k] (+)= a[n x m] * b[k x m]^T
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
               std::size_t n, std::size_t m, std::size_t k,
               bool accumulate = false) {
  for (std::size_t i = 0; i < n; ++i)
    detail::matmul_nt_row(a.data() + i * m, b.data(), c.data() + i * k, m, k,
                          accumulate);
}

template <typename T>
void attention_forward(std::span<const T> qkv, std::span<T> out,
                       std::span<T> probs, const AttentionShape& s) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.n_heads; ++h)
      detail::attention_head_forward(qkv.data(), out.data(), probs.data(), s,
                                     b, h);
}

template <typename T>
void attention_backward(std::span<const T> qkv, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dqkv,
                        const AttentionShape& s) {
  std::vector<T> scratch(s.seq);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.n_heads; ++h)
      detail::attention_head_backward(qkv.data(), probs.data(), dout.data(),
                                      dqkv.data(), scratch.data(), s, b, h);
}

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c,
            std::size_t n, std::size_t k, std::size_t m,
            bool accumulate = false) {
  const std::int64_t rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::int64_t i = 0; i < rows; ++i)
    detail::matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m,
                       accumulate);
}

template <typename T>
void matmul_tn_accum(std::span<const T> a, std::span<const T> b,
                     std::span<T> c, std::size_t n, std::size_t k,
                     std::size_t m) {
  const std::int64_t rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::int64_t i = 0; i < rows; ++i)
    detail::matmul_tn_row(a.data(), b.data(), c.data() + i * m,
                          static_cast<std::size_t>(i), n, k, m);
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
               std::size_t n, std::size_t m, std::size_t k,
               bool accumulate = false) {
  const std::int64_t rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::int64_t i = 0; i < rows; ++i)
    detail::matmul_nt_row(a.data() + i * m, b.data(), c.data() + i * k, m, k,
                          accumulate);
}

template <typename T>
void attention_forward(std::span<const T> qkv, std::span<T> out,
                       std::span<T> probs, const AttentionShape& s) {
  const std::int64_t pairs = static_cast<std::int64_t>(s.batch * s.n_heads);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < pairs; ++p)
    detail::attention_head_forward(qkv.data(), out.data(), probs.data(), s,
                                   p / s.n_heads, p % s.n_heads);
}

template <typename T>
void attention_backward(std::span<const T> qkv, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dqkv,
                        const AttentionShape& s) {
  const std::int64_t pairs = static_cast<std::int64_t>(s.batch * s.n_heads);
#pragma omp parallel
  {
    std::vector<T> scratch(s.seq);
#pragma omp for schedule(static)
    for (std::int64_t p = 0; p < pairs; ++p)
      detail::attention_head_backward(qkv.data(), probs.data(), dout.data(),
                                      dqkv.data(), scratch.data(), s,
                                      p / s.n_heads, p % s.n_heads);
  }
}

}  // namespace parallel

// Entry points used by the model.
using parallel::attention_backward;
using parallel::attention_forward;
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn_accum;

}  // namespace toba::kernels
