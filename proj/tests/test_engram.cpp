#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "test_util.hpp"
#include "toba/engram.hpp"

using namespace toba;
using namespace toba::engram;
using toba::testing::close_rel;

namespace {

// Frozen from an independent evaluation of the hash formula in Python with
// explicit 64-bit masking.
constexpr std::uint64_t kBigram_3_7_4096 = 2604;
constexpr std::uint64_t kTrigram_1_2_3_4096 = 3619;

EngramParams<double> random_params(const EngramConfig& cfg, std::size_t d_model,
                                   Rng& rng, double table_scale = 1.0) {
  EngramParams<double> p(cfg, d_model);
  p.init(rng, 0.5);
  p.table.init_normal(rng, table_scale);
  for (std::size_t k = 0; k < cfg.dim; ++k)
    p.rms_gain.value[k] = 1.0 + 0.3 * rng.normal();
  return p;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> t(n);
  for (auto& v : t) v = static_cast<TokenId>(rng.below(vocab));
  return t;
}

}  // namespace

TEST_CASE("hash examples") {
  CHECK(hash_bigram(0, 0, 1) == 0);
  CHECK(hash_trigram(0, 0, 0, 1) == 0);
  CHECK(hash_bigram(3, 7, 4096) == kBigram_3_7_4096);
  CHECK(hash_trigram(1, 2, 3, 4096) == kTrigram_1_2_3_4096);
  static_assert(hash_bigram(3, 7, 4096) == kBigram_3_7_4096);
}

TEST_CASE("hash is order sensitive and in range") {
  Rng rng(21);
  int asym = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = rng.below(3000), b = rng.below(3000), c = rng.below(3000);
    const std::uint64_t T = 1 + rng.below(100000);
    CHECK(hash_bigram(a, b, T) < T);
    CHECK(hash_trigram(a, b, c, T) < T);
    if (a != b && hash_bigram(a, b, 4096) != hash_bigram(b, a, 4096)) ++asym;
  }
  CHECK(asym > 9900);
}

TEST_CASE("bigram bucket loads are within 5 sigma of uniform") {
  constexpr std::size_t T = 4096;
  constexpr std::size_t N = 1000000;
  std::vector<std::size_t> load(T, 0);
  Rng rng(99);
  for (std::size_t i = 0; i < N; ++i) {
    const auto h = hash_bigram(rng.below(1u << 20), rng.below(1u << 20), T);
    REQUIRE(h < T);
    ++load[h];
  }
  const double p = 1.0 / T;
  const double mean = N * p;
  const double sigma = std::sqrt(N * p * (1 - p));
  double worst = 0;
  for (auto l : load) worst = std::max(worst, std::abs(l - mean) / sigma);
  MESSAGE("worst bucket deviation: " << worst << " sigma");
  CHECK(worst <= 5.0);
}

TEST_CASE("lookup returns the addressed row with bos padding") {
  EngramConfig cfg;
  cfg.table_size = 97;
  Matrix<double> table(cfg.table_size, 4);
  std::vector<TokenId> toks = {10, 11, 12};

  CHECK(lookup_bigram<double>(toks, 1, table) == std::vector<double>(4, 0.0));

  const auto r = hash_bigram(10, 11, cfg.table_size);
  table(r, 2) = 1.0;
  CHECK(lookup_bigram<double>(toks, 1, table) == std::vector<double>{0, 0, 1, 0});

  CHECK(bigram_row(toks, 0, cfg.table_size, tok::kBosId) ==
        hash_bigram(tok::kBosId, 10, cfg.table_size));
  CHECK(trigram_row(toks, 0, cfg.table_size, tok::kBosId) ==
        hash_trigram(tok::kBosId, tok::kBosId, 10, cfg.table_size));
  CHECK(trigram_row(toks, 1, cfg.table_size, tok::kBosId) ==
        hash_trigram(tok::kBosId, 10, 11, cfg.table_size));
  CHECK(trigram_row(toks, 2, cfg.table_size, tok::kBosId) ==
        hash_trigram(10, 11, 12, cfg.table_size));

  const auto r3 = hash_trigram(10, 11, 12, cfg.table_size);
  table.fill(0.0);
  table(r3, 0) = 1.0;
  CHECK(lookup_trigram<double>(toks, 2, table) == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("rmsnorm examples") {
  const std::vector<double> ones = {1, 1};
  auto y = rmsnorm<double>(std::vector<double>{3, 4}, ones, 0.0);
  CHECK(y[0] == doctest::Approx(0.848528137423857).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(1.131370849898476).epsilon(1e-12));
  CHECK(rmsnorm<double>(std::vector<double>{0, 0}, ones, 1e-6) ==
        std::vector<double>{0, 0});
  CHECK(rmsnorm<double>(std::vector<double>{3, 4}, std::vector<double>{0, 0},
                        1e-6) == std::vector<double>{0, 0});
}

TEST_CASE("relevance score examples") {
  const std::vector<double> ones(4, 1.0);
  CHECK(relevance_score<double>(ones, ones) == doctest::Approx(2.0));
  CHECK(relevance_score<double>(ones, std::vector<double>(4, 0.0)) == 0.0);
  CHECK(relevance_score<double>(std::vector<double>{1, 0},
                                std::vector<double>{0.5, 2}) ==
        doctest::Approx(0.35355339059327373).epsilon(1e-12));
  CHECK_THROWS_AS(relevance_score<double>(ones, std::vector<double>{1, 2}),
                  ShapeError);
}

TEST_CASE("gate examples and properties") {
  Matrix<double> w(3, 2);
  for (double g : gate<double>(std::vector<double>{1, -2, 3}, w)) CHECK(g == 0.5);

  Matrix<double> w1(1, 1, 1.0);
  CHECK(gate<double>(std::vector<double>{std::log(3.0)}, w1)[0] ==
        doctest::Approx(0.75).epsilon(1e-12));

  double prev = 0.0;
  for (double x = -30; x <= 30; x += 0.5) {
    const double g = sigmoid(x);
    CHECK(g > 0.0);
    CHECK(g < 1.0);
    CHECK(g > prev);
    prev = g;
    const double num = testing::central_difference(
        [&] { return sigmoid(x); }, &x, 1e-6);
    CHECK(std::abs(num - g * (1 - g)) <= 1e-8);
  }
}

TEST_CASE("engram_forward is the identity with a zero table") {
  Rng rng(4);
  EngramConfig cfg;
  cfg.table_size = 128;
  cfg.dim = 8;
  cfg.heads = 2;
  EngramParams<double> p(cfg, 12);
  p.init(rng, 0.7);
  const auto toks = random_tokens(rng, 6, 50);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> h(12);
    for (auto& v : h) v = 3 * rng.normal();
    for (std::size_t t = 0; t < toks.size(); ++t)
      CHECK(engram_forward<double>(h, toks, t, p, cfg) == h);
  }
}

TEST_CASE("engram_forward scalar closed form") {
  EngramConfig cfg;
  cfg.table_size = 31;
  cfg.dim = 1;
  cfg.heads = 1;
  cfg.rms_eps = 1e-300;
  EngramParams<double> p(cfg, 1);
  p.w_q.value[0] = 1;
  p.w_o.value[0] = 1;
  p.w_g.value[0] = 1;
  std::vector<TokenId> toks = {7, 8, 9};
  const std::size_t t = 2;
  p.table.value[bigram_row(toks, t, cfg.table_size, cfg.bos_id)] = 2.0;
  REQUIRE(bigram_row(toks, t, 31, cfg.bos_id) != trigram_row(toks, t, 31, cfg.bos_id));

  // e2 normalizes to 1 and e3 = 0, so s2 = h, s3 = 0, alpha2 = sigma(h),
  // g = sigma(h) and h' = h + sigma(h)^2.
  CHECK(engram_forward<double>(std::vector<double>{0.5}, toks, t, p, cfg)[0] ==
        doctest::Approx(0.88745561900026).epsilon(1e-12));
  CHECK(engram_forward<double>(std::vector<double>{-1.25}, toks, t, p, cfg)[0] ==
        doctest::Approx(-1.2004046481671882).epsilon(1e-12));
}

TEST_CASE("engram_forward rejects inconsistent shapes") {
  EngramConfig cfg;
  cfg.table_size = 16;
  EngramParams<double> p(cfg, 8);
  std::vector<TokenId> toks = {1, 2};
  CHECK_THROWS_AS(engram_forward<double>(std::vector<double>(5, 0.0), toks, 0, p, cfg),
                  ShapeError);
}

TEST_CASE("config validation") {
  EngramConfig cfg;
  cfg.dim = 6;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.heads = 2;
  cfg.insert_after_block = 5;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.insert_after_block = 4;
  CHECK_NOTHROW(cfg.validate(4));
}

TEST_CASE("batched layer matches the single-position forward and alphas sum to one") {
  Rng rng(8);
  EngramConfig cfg;
  cfg.table_size = 32;
  cfg.dim = 8;
  cfg.heads = 2;
  const std::size_t D = 10, B = 2, S = 6;
  auto p = random_params(cfg, D, rng);
  const auto toks = random_tokens(rng, B * S, 20);
  auto h = testing::random_matrix<double>(rng, B * S, D);
  Matrix<double> out;
  EngramCache<double> cache;
  layer_forward<double>(h, toks, B, S, p, cfg, out, &cache);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < S; ++t) {
      const auto i = b * S + t;
      const auto single = engram_forward<double>(
          h.row(i), std::span(toks).subspan(b * S, S), t, p, cfg);
      for (std::size_t d = 0; d < D; ++d)
        CHECK(std::abs(single[d] - out(i, d)) <= 1e-13);
      for (std::size_t j = 0; j < cfg.heads; ++j) {
        CHECK(std::abs(cache.alpha2(i, j) + cache.alpha3(i, j) - 1.0) <= 1e-12);
        CHECK(cache.g(i, j) > 0.0);
        CHECK(cache.g(i, j) < 1.0);
      }
    }
}

namespace {

struct GradCase {
  EngramConfig cfg;
  std::size_t d_model, batch, seq;
};

void check_layer_gradients(const GradCase& gc, std::uint64_t seed) {
  Rng rng(seed);
  const auto& cfg = gc.cfg;
  auto p = random_params(cfg, gc.d_model, rng);
  const auto toks = random_tokens(rng, gc.batch * gc.seq, 12);
  auto h = testing::random_matrix<double>(rng, gc.batch * gc.seq, gc.d_model);
  const auto r = testing::random_matrix<double>(rng, gc.batch * gc.seq, gc.d_model);

  auto loss = [&] {
    Matrix<double> out;
    layer_forward<double>(h, toks, gc.batch, gc.seq, p, cfg, out, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };

  Matrix<double> out, dh;
  EngramCache<double> cache;
  layer_forward<double>(h, toks, gc.batch, gc.seq, p, cfg, out, &cache);
  p.visit([](Param<double>& q) { q.zero_grad(); });
  layer_backward<double>(r, cache, p, cfg, dh);

  std::set<std::size_t> touched(cache.row2.begin(), cache.row2.end());
  touched.insert(cache.row3.begin(), cache.row3.end());

  std::size_t checked = 0;
  p.visit([&](Param<double>& q) {
    for (std::size_t i = 0; i < q.value.size(); ++i) {
      if (&q == &p.table && !touched.count(i / cfg.dim)) continue;
      const double num = testing::central_difference(loss, &q.value[i]);
      INFO(q.name << "[" << i << "] analytic " << q.grad[i] << " numeric " << num);
      CHECK(close_rel(q.grad[i], num, 1e-4, 1e-8));
      ++checked;
    }
  });
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double num = testing::central_difference(loss, &h[i]);
    INFO("h[" << i << "] analytic " << dh[i] << " numeric " << num);
    CHECK(close_rel(dh[i], num, 1e-4, 1e-8));
  }
  CHECK(checked > 0);

  // Rows never addressed get exactly zero gradient; addressed rows do not.
  for (std::size_t row = 0; row < cfg.table_size; ++row) {
    bool nonzero = false;
    for (std::size_t k = 0; k < cfg.dim; ++k)
      nonzero |= p.table.grad(row, k) != 0.0;
    CHECK(nonzero == static_cast<bool>(touched.count(row)));
  }
}

}  // namespace

TEST_CASE("layer gradients match central differences on random small shapes") {
  Rng shapes(17);
  for (int trial = 0; trial < 8; ++trial) {
    GradCase gc;
    gc.cfg.heads = 1 + shapes.below(2);
    gc.cfg.dim = gc.cfg.heads * (1 + shapes.below(8 / gc.cfg.heads));
    gc.cfg.table_size = 8 + shapes.below(40);
    gc.d_model = 1 + shapes.below(16);
    gc.batch = 1 + shapes.below(2);
    gc.seq = 3 + shapes.below(4);
    CAPTURE(trial);
    check_layer_gradients(gc, 100 + static_cast<std::uint64_t>(trial));
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(2);
  EngramConfig cfg;
  cfg.table_size = 16;
  auto p = random_params(cfg, 6, rng);
  const auto toks = random_tokens(rng, 8, 10);
  auto h = testing::random_matrix<double>(rng, 8, 6);
  Matrix<double> out, dh;
  EngramCache<double> cache;
  layer_forward<double>(h, toks, 2, 4, p, cfg, out, &cache);
  p.visit([](Param<double>& q) { q.zero_grad(); });
  layer_backward<double>(Matrix<double>(8, 6), cache, p, cfg, dh);
  p.visit([](Param<double>& q) {
    for (std::size_t i = 0; i < q.grad.size(); ++i) CHECK(q.grad[i] == 0.0);
  });
  for (std::size_t i = 0; i < dh.size(); ++i) CHECK(dh[i] == 0.0);
}
