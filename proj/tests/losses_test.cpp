#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dsgd/head_losses.hpp"
#include "dsgd/losses.hpp"
#include "oracles.hpp"

using namespace dsgd;
using Vec = std::vector<double>;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -3, double hi = 3) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Compares an analytic gradient against central differences of `f`.
void check_gradient(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& analytic,
                    double tol = 1e-4, double h = 1e-4) {
  ASSERT_EQ(x.size(), analytic.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = oracle::central_diff(f, x, i, h);
    if (std::abs(fd) < 1e-7 && std::abs(analytic[i]) < 1e-7) continue;
    EXPECT_LT(oracle::rel_err(analytic[i], fd), tol) << "component " << i << " fd " << fd << " got " << analytic[i];
  }
}

}  // namespace

TEST(LReg, Examples) {
  const Vec r{2, 2, 2, 2}, t{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(l_reg<double>(r, t), 1.0);
  EXPECT_DOUBLE_EQ(l_reg<double>(t, t), 0.0);
  EXPECT_THROW(l_reg<double>(r, Vec{0, 0, 0, 0}), Error);
  EXPECT_THROW(l_reg<double>(r, Vec{1, 1}), std::invalid_argument);
}

TEST(LReg, Homogeneous) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Vec r = random_vec(rng, 4), t = random_vec(rng, 4);
    const double c = std::uniform_real_distribution<double>(0.1, 10)(rng);
    Vec rc = r, tc = t;
    for (auto& v : rc) v *= c;
    for (auto& v : tc) v *= c;
    EXPECT_NEAR(l_reg<double>(r, t), l_reg<double>(rc, tc), 1e-10);
    EXPECT_GE(l_reg<double>(r, t), 0);
  }
}

TEST(LReg, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vec r = random_vec(rng, 4), t = random_vec(rng, 4);
    Vec g(4, 0.0);
    l_reg<double>(r, t, g);
    check_gradient([&](const Vec& x) { return l_reg<double>(x, t); }, r, g);
  }
}

TEST(LCls, Examples) {
  const Vec uniform(50, 0.7);
  EXPECT_NEAR(l_cls<double>(uniform, 17), std::log(50.0), 1e-12);
  Vec peaked(50, 0.0);
  peaked[3] = 60;
  EXPECT_LT(l_cls<double>(peaked, 3), 1e-20);
  EXPECT_THROW(l_cls<double>(peaked, 50), std::out_of_range);
  EXPECT_TRUE(std::isfinite(l_cls<double>(Vec{1000, -1000}, 1)));
}

TEST(LCls, MinimizedByTargetClass) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Vec z = random_vec(rng, 50);
    const int c = static_cast<int>(rng() % 50);
    const double before = l_cls<double>(z, c);
    z[c] += 1;
    EXPECT_LT(l_cls<double>(z, c), before);
  }
}

TEST(LCls, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vec z = random_vec(rng, 50);
    const int c = static_cast<int>(rng() % 50);
    Vec g(50, 0.0);
    l_cls<double>(z, c, g);
    check_gradient([&](const Vec& x) { return l_cls<double>(x, c); }, z, g);
  }
}

TEST(LSeg, Examples) {
  Vec t(196, 0.0);
  for (std::size_t i = 0; i < t.size(); i += 3) t[i] = 1;
  EXPECT_NEAR(l_seg<double>(t, t), -std::log(1 - kSegEps), 1e-9);
  EXPECT_NEAR(l_seg<double>(Vec(196, 0.5), t), std::log(2.0), 1e-12);
  EXPECT_NEAR(l_seg<double>(Vec(196, 0.5), Vec(196, 1.0)), std::log(2.0), 1e-12);
  EXPECT_NEAR(l_seg_logits<double>(Vec(196, 0.0), t), std::log(2.0), 1e-12);
}

TEST(LSeg, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec p = random_vec(rng, 196, 0.05, 0.95);
    Vec t(196);
    for (auto& v : t) v = static_cast<double>(rng() % 2);
    Vec g(196, 0.0);
    l_seg<double>(p, t, g);
    check_gradient([&](const Vec& x) { return l_seg<double>(x, t); }, p, g);
    const Vec z = random_vec(rng, 196);
    Vec gz(196, 0.0);
    l_seg_logits<double>(z, t, gz);
    check_gradient([&](const Vec& x) { return l_seg_logits<double>(x, t); }, z, gz);
  }
}

TEST(LSeg, MatchesSigmoidComposition) {
  std::mt19937_64 rng(6);
  const Vec z = random_vec(rng, 196, -5, 5);
  Vec p(196), t(196);
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = 1 / (1 + std::exp(-z[i]));
    t[i] = static_cast<double>(rng() % 2);
  }
  EXPECT_NEAR(l_seg<double>(p, t), l_seg_logits<double>(z, t), 1e-9);
}

TEST(GgpnLoss, LambdaEndpoints) {
  std::mt19937_64 rng(7);
  const Vec reg = random_vec(rng, 4), tgt = random_vec(rng, 4, 0.1, 1), th = random_vec(rng, 50);
  EXPECT_NEAR(ggpn_loss<double>(reg, th, tgt, 9, 0.0), l_reg<double>(reg, tgt), 1e-12);
  EXPECT_NEAR(ggpn_loss<double>(reg, th, tgt, 9, 1.0), l_cls<double>(th, 9), 1e-12);
  EXPECT_NEAR(ggpn_loss<double>(reg, th, tgt, 9, 0.4),
              0.6 * l_reg<double>(reg, tgt) + 0.4 * l_cls<double>(th, 9), 1e-12);
}

TEST(GgpnLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const Vec tgt = random_vec(rng, 4, 0.1, 1);
    Vec x = random_vec(rng, 54);
    Vec g(54, 0.0);
    std::span<double> gs(g);
    ggpn_loss<double>(std::span<const double>(x).first(4), std::span<const double>(x).subspan(4), tgt, 3, 0.4,
                      gs.first(4), gs.subspan(4));
    check_gradient(
        [&](const Vec& v) {
          return ggpn_loss<double>(std::span<const double>(v).first(4), std::span<const double>(v).subspan(4), tgt,
                                   3, 0.4);
        },
        x, g);
  }
}

TEST(SrnLoss, GradientAndMasking) {
  std::mt19937_64 rng(9);
  std::vector<AnchorTarget> t(6);
  const int labels[6] = {1, 0, kIgnoreLabel, 1, 0, kIgnoreLabel};
  for (int i = 0; i < 6; ++i) {
    t[i].label = labels[i];
    t[i].anchor = Box{20.0 + 5 * i, 30, 12, 8};
    t[i].target = {0.3 + 0.05 * i, 0.5, 0.2, 0.15};
  }
  const Vec d = random_vec(rng, 24, -0.5, 0.5), s = random_vec(rng, 12);
  Vec gd(24, 0.0), gs(12, 0.0);
  srn_loss<double>(d, s, t, 64, 64, 0.4, gd, gs);
  check_gradient([&](const Vec& x) { return srn_loss<double>(x, s, t, 64, 64, 0.4); }, d, gd);
  check_gradient([&](const Vec& x) { return srn_loss<double>(d, x, t, 64, 64, 0.4); }, s, gs);
  // Ignored anchors and negatives' deltas get no gradient.
  for (int i : {1, 2, 4, 5})
    for (int k = 0; k < 4; ++k) EXPECT_EQ(gd[4 * i + k], 0.0);
  for (int i : {2, 5}) EXPECT_EQ(gs[2 * i] + gs[2 * i + 1], 0.0);
}

TEST(RgpnLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  std::vector<RegionLossTarget> t(3);
  t[0].label = 1;
  t[0].reg = {0.4, 0.6, 0.3, 0.2};
  t[0].bin = 12;
  t[1].label = 0;
  t[2].label = kIgnoreLabel;
  for (auto& r : t) {
    r.mask.resize(kMaskCells);
    for (auto& m : r.mask) m = static_cast<float>(rng() % 2);
  }
  const std::size_t nr = 3 * 8, nt = 3 * 100, np = 3 * 2, nm = 3 * 2 * kMaskCells;
  const Vec x = random_vec(rng, nr + nt + np + nm);
  auto f = [&](const Vec& v, Vec* g) {
    std::span<const double> s(v);
    std::span<double> gs = g ? std::span<double>(*g) : std::span<double>{};
    auto part = [&](std::span<double> a, std::size_t o, std::size_t n) { return a.empty() ? a : a.subspan(o, n); };
    return rgpn_loss<double>(s.subspan(0, nr), s.subspan(nr, nt), s.subspan(nr + nt, np), s.subspan(nr + nt + np, nm),
                             t, 0.4, part(gs, 0, nr), part(gs, nr, nt), part(gs, nr + nt, np),
                             part(gs, nr + nt + np, nm));
  };
  Vec g(x.size(), 0.0);
  f(x, &g);
  check_gradient([&](const Vec& v) { return f(v, nullptr); }, x, g);
  // The non-graspable region trains only its rho and class-0 mask.
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(g[8 + k], 0.0);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(g[nr + 100 + k], 0.0);
  for (int k = 0; k < kMaskCells; ++k) EXPECT_EQ(g[nr + nt + np + 3 * kMaskCells + k], 0.0);
  // The ignored region trains nothing.
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(g[16 + k], 0.0);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(g[nr + nt + 4 + k], 0.0);
}

TEST(PgnLoss, GradientAndEmptySupport) {
  std::mt19937_64 rng(11);
  const int W = 6, H = 5, n = W * H;
  PixelTargets t;
  t.width = W;
  t.height = H;
  t.xy.assign(n, 0);
  t.w.assign(n, 0);
  t.h.assign(n, 0);
  t.theta.assign(n, kIgnoreLabel);
  for (int i : {7, 8, 13, 14, 20}) {
    t.xy[i] = 0.5f + 0.1f * (i % 3);
    t.w[i] = 3 + i % 4;
    t.h[i] = 2 + i % 3;
    t.theta[i] = i % kAngleBins;
  }
  const std::size_t sz = static_cast<std::size_t>(n) * (3 + kAngleBins);
  Vec x = random_vec(rng, sz, 0.1, 0.9);
  auto f = [&](const Vec& v, Vec* g, const PixelTargets& tg) {
    std::span<const double> s(v);
    std::span<double> gs = g ? std::span<double>(*g) : std::span<double>{};
    auto part = [&](std::size_t o, std::size_t k) { return gs.empty() ? gs : gs.subspan(o, k); };
    return pgn_loss<double>(s.subspan(0, n), s.subspan(n, n), s.subspan(2 * n, n), s.subspan(3 * n), tg, part(0, n),
                            part(n, n), part(2 * n, n), part(3 * n, sz - 3 * n));
  };
  Vec g(sz, 0.0);
  f(x, &g, t);
  check_gradient([&](const Vec& v) { return f(v, nullptr, t); }, x, g);
  // Size and angle outputs outside the support get no gradient.
  for (int i = 0; i < n; ++i)
    if (!t.in_support(i)) {
      EXPECT_EQ(g[n + i], 0.0);
      EXPECT_EQ(g[3 * n + i], 0.0);
    }

  PixelTargets empty = t;
  std::fill(empty.xy.begin(), empty.xy.end(), 0.0f);
  std::fill(empty.theta.begin(), empty.theta.end(), kIgnoreLabel);
  double norm = 0;
  for (int i = 0; i < n; ++i) norm += x[i] * x[i];
  EXPECT_NEAR(f(x, nullptr, empty), std::sqrt(norm), 1e-9);
}
