#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "cpr/checkpoint.hpp"
#include "cpr/error.hpp"
#include "cpr/gradcheck.hpp"
#include "cpr/ops.hpp"
#include "cpr/params.hpp"
#include "cpr/rng.hpp"
#include "support.hpp"

using namespace cpr;
using cpr::testing::random_tensor;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no cpr::Error thrown";
  return Errc::kMalformed;
}

// Weighted sum of outputs: a generic scalar probe for backward passes.
double probe(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedSeedsDifferByPurposeAndIndex) {
  EXPECT_NE(derive_seed(1, "shuffle"), derive_seed(1, "mining"));
  EXPECT_NE(derive_seed(1, "shuffle", 0), derive_seed(1, "shuffle", 1));
  EXPECT_NE(derive_seed(1, "shuffle"), derive_seed(2, "shuffle"));
  EXPECT_EQ(derive_seed(9, "x", 3), derive_seed(9, "x", 3));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 800);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Tensor, ShapeAndFiniteness) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_TRUE(t.all_finite());
  t(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_EQ(code_of([&] { require_finite(t, "t"); }), Errc::kNonFiniteValue);
}

TEST(Ops, LinearMatchesHandComputation) {
  const Tensor x({1, 2}, std::vector<double>{1, 2});
  const Tensor w({2, 2}, std::vector<double>{1, 0, 3, -1});
  const Tensor b({2}, std::vector<double>{0.5, 0});
  const Tensor y = nn::linear_forward(x, w, b);
  EXPECT_DOUBLE_EQ(y(0, 0), 7.5);
  EXPECT_DOUBLE_EQ(y(0, 1), -2.0);
}

TEST(Ops, LinearGradCheck) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
    const Tensor probe_w = random_tensor({3, 2}, rng);
    Tensor dw({4, 2}), db({2});
    const Tensor dx = nn::linear_backward(x, w, probe_w, dw, db);
    auto f = [&] { return probe(nn::linear_forward(x, w, b), probe_w); };
    EXPECT_LE(finite_diff_check(f, x, dx).max_rel_error, 1e-6);
    EXPECT_LE(finite_diff_check(f, w, dw).max_rel_error, 1e-6);
    EXPECT_LE(finite_diff_check(f, b, db).max_rel_error, 1e-6);
  }
}

TEST(Ops, EluExample) {
  const Tensor y = nn::elu_forward(Tensor({2}, std::vector<double>{-1, 2}));
  EXPECT_NEAR(y[0], std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Ops, EluGradCheck) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 5}, rng);
    // Keep away from the kink of the second derivative at 0.
    for (double& v : x.values()) {
      if (std::abs(v) < 1e-2) v += 0.1;
    }
    const Tensor w = random_tensor({4, 5}, rng);
    const Tensor dx = nn::elu_backward(x, w);
    EXPECT_LE(finite_diff_check([&] { return probe(nn::elu_forward(x), w); }, x, dx).max_rel_error, 1e-6);
  }
}

TEST(Ops, LayerNormExamples) {
  const Tensor gain({2}, 1.0), bias({2}, 0.0);
  const Tensor y = nn::layernorm_forward(Tensor({1, 2}, std::vector<double>{1, 3}), gain, bias);
  // var = 1 with the 1/D estimator; eps shifts the result slightly.
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
  const Tensor shift({3}, std::vector<double>{0.25, -1, 2});
  const Tensor c = nn::layernorm_forward(Tensor({1, 3}, 4.0), Tensor({3}, 2.0), shift);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(c[j], shift[j]);
}

TEST(Ops, LayerNormGradCheck) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    const Tensor w = random_tensor({3, 6}, rng);
    nn::LayerNormCache cache;
    nn::layernorm_forward(x, g, b, &cache);
    Tensor dg({6}), db({6});
    const Tensor dx = nn::layernorm_backward(cache, g, w, dg, db);
    auto f = [&] { return probe(nn::layernorm_forward(x, g, b), w); };
    EXPECT_LE(finite_diff_check(f, x, dx).max_rel_error, 1e-5);
    EXPECT_LE(finite_diff_check(f, g, dg).max_rel_error, 1e-5);
    EXPECT_LE(finite_diff_check(f, b, db).max_rel_error, 1e-5);
  }
}

TEST(Ops, MaskedMean) {
  Tensor x({4, 2}, std::vector<double>{1, 2, 3, 4, 0, 0, 0, 0});
  const Tensor one = nn::masked_mean_forward(x, 1);
  EXPECT_DOUBLE_EQ(one[0], 1.0);
  EXPECT_DOUBLE_EQ(one[1], 2.0);
  const Tensor two = nn::masked_mean_forward(x, 2);
  EXPECT_DOUBLE_EQ(two[0], 2.0);
  EXPECT_DOUBLE_EQ(two[1], 3.0);
  EXPECT_EQ(code_of([&] { nn::masked_mean_forward(x, 0); }), Errc::kEmptySet);

  const Tensor dy({2}, std::vector<double>{3, -6});
  const Tensor dx = nn::masked_mean_backward(dy, 4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_DOUBLE_EQ(dx(r, 0), r < 3 ? 1.0 : 0.0);
    EXPECT_DOUBLE_EQ(dx(r, 1), r < 3 ? -2.0 : 0.0);
  }
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor xr = random_tensor({45, 3}, rng);
    const std::size_t k = 1 + rng.below(45);
    const Tensor w = random_tensor({3}, rng);
    const Tensor d = nn::masked_mean_backward(w, 45, k);
    EXPECT_LE(finite_diff_check([&] { return probe(nn::masked_mean_forward(xr, k), w); }, xr, d).max_rel_error, 1e-6);
  }
}

TEST(Ops, Conv1dMatchesDirectSum) {
  Rng rng(5);
  const Tensor x = random_tensor({5, 2}, rng), w = random_tensor({3, 2, 3}, rng), b = random_tensor({3}, rng);
  const Tensor y = nn::conv1d_forward(x, w, b);
  for (std::size_t l = 0; l < 5; ++l) {
    for (std::size_t o = 0; o < 3; ++o) {
      double s = b[o];
      for (int k = 0; k < 3; ++k) {
        const long src = static_cast<long>(l) + k - 1;
        if (src < 0 || src >= 5) continue;
        for (std::size_t c = 0; c < 2; ++c) s += x(static_cast<std::size_t>(src), c) * w[(k * 2 + c) * 3 + o];
      }
      EXPECT_NEAR(y(l, o), s, 1e-12);
    }
  }
}

TEST(Ops, Conv1dGradCheck) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({6, 2}, rng), w = random_tensor({3, 2, 3}, rng), b = random_tensor({3}, rng);
    const Tensor p = random_tensor({6, 3}, rng);
    Tensor dw(w.shape()), db(b.shape());
    const Tensor dx = nn::conv1d_backward(x, w, p, dw, db);
    auto f = [&] { return probe(nn::conv1d_forward(x, w, b), p); };
    EXPECT_LE(finite_diff_check(f, x, dx).max_rel_error, 1e-6);
    EXPECT_LE(finite_diff_check(f, w, dw).max_rel_error, 1e-6);
    EXPECT_LE(finite_diff_check(f, b, db).max_rel_error, 1e-6);
  }
}

TEST(Ops, CosineExamples) {
  const std::vector<double> u{1, 0}, v{1, 1}, w{0, 3};
  EXPECT_NEAR(nn::cosine_sim(u, v), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(nn::cosine_sim(v, v), 1.0);
  EXPECT_DOUBLE_EQ(nn::cosine_sim(u, w), 0.0);
  const std::vector<double> zero{0, 0};
  EXPECT_EQ(code_of([&] { nn::cosine_sim(u, zero); }), Errc::kZeroVector);
}

TEST(Ops, CosineSymmetricAndScaleInvariant) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor u = random_tensor({5}, rng), v = random_tensor({5}, rng);
    const double a = 0.1 + 10 * rng.uniform(), b = 0.1 + 10 * rng.uniform();
    Tensor au = u, bv = v;
    for (double& x : au.values()) x *= a;
    for (double& x : bv.values()) x *= b;
    EXPECT_NEAR(nn::cosine_sim(u.values(), v.values()), nn::cosine_sim(v.values(), u.values()), 1e-15);
    EXPECT_NEAR(nn::cosine_sim(au.values(), bv.values()), nn::cosine_sim(u.values(), v.values()), 1e-12);
  }
}

TEST(Ops, CosineGradCheck) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor u = random_tensor({4}, rng), v = random_tensor({4}, rng);
    Tensor du({4}), dv({4});
    nn::cosine_sim_backward(u.values(), v.values(), 1.0, du.values(), dv.values());
    auto f = [&] { return nn::cosine_sim(u.values(), v.values()); };
    EXPECT_LE(finite_diff_check(f, u, du).max_rel_error, 1e-5);
    EXPECT_LE(finite_diff_check(f, v, dv).max_rel_error, 1e-5);
  }
}

TEST(Ops, NormalizeAndCosineMatrix) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({5, 4}, rng);
    const Tensor s = nn::cosine_matrix(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(s(i, j), nn::cosine_sim(a.row(i), b.row(j)), 1e-14);
    }
    const Tensor p = random_tensor({3, 5}, rng);
    Tensor da(a.shape()), db(b.shape());
    nn::cosine_matrix_backward(a, b, s, p, da, db);
    auto f = [&] { return probe(nn::cosine_matrix(a, b), p); };
    EXPECT_LE(finite_diff_check(f, a, da, 1e-6).max_rel_error, 1e-5);
    EXPECT_LE(finite_diff_check(f, b, db, 1e-6).max_rel_error, 1e-5);

    std::vector<double> norms;
    const Tensor y = nn::l2_normalize_rows(a, &norms);
    for (std::size_t i = 0; i < 3; ++i) {
      double n = 0;
      for (double v : y.row(i)) n += v * v;
      EXPECT_NEAR(n, 1.0, 1e-12);
    }
    const Tensor q = random_tensor({3, 4}, rng);
    const Tensor dx = nn::l2_normalize_rows_backward(y, norms, q);
    EXPECT_LE(finite_diff_check([&] { return probe(nn::l2_normalize_rows(a), q); }, a, dx).max_rel_error, 1e-5);
  }
}

TEST(Sgd, Examples) {
  ParamStore ps;
  ps.add("theta", Tensor({1}, 1.0)).grad[0] = 2.0;
  sgd_step(ps, {0.1});
  EXPECT_DOUBLE_EQ(ps.at("theta").value[0], 0.8);
  EXPECT_EQ(ps.at("theta").grad[0], 0.0);
  EXPECT_EQ(ps.step(), 1u);
  sgd_step(ps, {0.1});  // zero gradient
  EXPECT_DOUBLE_EQ(ps.at("theta").value[0], 0.8);
  EXPECT_EQ(ps.step(), 2u);
}

TEST(Sgd, NonFiniteGradientLeavesParametersUntouched) {
  ParamStore ps;
  ps.add("a", Tensor({1}, 1.0)).grad[0] = 1.0;
  ps.add("b", Tensor({1}, 1.0)).grad[0] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { sgd_step(ps, {0.1}); }), Errc::kNonFiniteGradient);
  EXPECT_EQ(ps.at("a").value[0], 1.0);
  EXPECT_EQ(ps.step(), 0u);
  EXPECT_EQ(code_of([&] { sgd_step(ps, {-1.0}); }), Errc::kInvalidConfig);
}

TEST(Sgd, IdenticalRunsAreBitwiseIdentical) {
  auto run = [] {
    Rng rng(12);
    ParamStore ps;
    ps.add_uniform("w", {4, 3}, 4, rng);
    for (int k = 0; k < 10; ++k) {
      for (double& g : ps.at("w").grad.values()) g = rng.normal();
      sgd_step(ps, {0.01});
    }
    return ps;
  };
  EXPECT_TRUE(run().same_values(run()));
}

TEST(ParamStore, UniformInitBounds) {
  Rng rng(13);
  ParamStore ps;
  ps.add_uniform("w", {16, 16}, 16, rng);
  for (double v : ps.at("w").value.values()) EXPECT_LE(std::abs(v), 0.25);
  EXPECT_EQ(ps.scalar_count(), 256u);
  EXPECT_EQ(code_of([&] { ps.add("w", Tensor({1})); }), Errc::kInvalidConfig);
}

TEST(GradCheck, DetectsAWrongGradient) {
  Tensor x({2}, std::vector<double>{0.3, -0.7});
  const Tensor wrong({2}, std::vector<double>{2 * 0.3, 0.0});
  const auto r = finite_diff_check([&] { return x[0] * x[0] + x[1] * x[1]; }, x, wrong);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_index, 1u);
  const Tensor right({2}, std::vector<double>{0.6, -1.4});
  EXPECT_TRUE(finite_diff_check([&] { return x[0] * x[0] + x[1] * x[1]; }, x, right).passed);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(14);
  ParamStore ps;
  ps.add("a.w", random_tensor({3, 2}, rng));
  ps.add("b", random_tensor({5}, rng));
  ps.at("b").value[0] = 0.1 + 0.2;  // not exactly representable in short decimal
  ps.set_step(77);
  std::stringstream one;
  write_checkpoint(one, ps, "{\"x\":1}");
  const Checkpoint back = read_checkpoint(one);
  EXPECT_EQ(back.header, "{\"x\":1}");
  EXPECT_TRUE(back.params.same_values(ps));
  EXPECT_EQ(back.params.step(), 77u);
  std::stringstream two;
  write_checkpoint(two, back.params, back.header);
  EXPECT_EQ(one.str(), two.str());
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream junk("not a checkpoint at all");
  EXPECT_EQ(code_of([&] { read_checkpoint(junk); }), Errc::kBadCheckpoint);
  Rng rng(15);
  ParamStore ps;
  ps.add("a", random_tensor({4}, rng));
  std::stringstream full;
  write_checkpoint(full, ps, "");
  std::stringstream cut(full.str().substr(0, full.str().size() - 5));
  EXPECT_EQ(code_of([&] { read_checkpoint(cut); }), Errc::kBadCheckpoint);
}
