#pragma once

// Composed per-head objectives over raw head outputs. Same conventions as
// losses.hpp: return the value, accumulate weighted gradients when given.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dsgd/geometry.hpp"
#include "dsgd/losses.hpp"
#include "dsgd/targets.hpp"

namespace dsgd {

inline constexpr int kRegionClasses = 2;
inline constexpr int kMaskCells = kMaskSize * kMaskSize;

namespace detail {
template <typename T>
std::span<T> sub(std::span<T> s, std::size_t off, std::size_t n) {
  return s.empty() ? s : s.subspan(off, n);
}
}  // namespace detail

/// (1 - lambda1) * l_reg(R, R*) + lambda1 * l_cls(theta, bin) for one image.
template <std::floating_point T>
T ggpn_loss(std::span<const T> reg, std::span<const T> theta_logits, std::span<const T> target,
            int bin, T lambda1, std::span<T> g_reg = {}, std::span<T> g_theta = {}, T weight = 1) {
  const T r = l_reg(reg, target, g_reg, weight * (1 - lambda1));
  const T c = l_cls(theta_logits, bin, g_theta, weight * lambda1);
  return (1 - lambda1) * r + lambda1 * c;
}

/// Two-way validity cross-entropy for one grasp image.
template <std::floating_point T>
T gen_loss(std::span<const T> rho_logits, int label, std::span<T> g = {}, T weight = 1) {
  return l_cls(rho_logits, label, g, weight);
}

/// Anchor in pixel center format with its label and normalized target box
/// (x / W, y / H, w / W, h / H).
struct AnchorTarget {
  int label = kIgnoreLabel;
  Box anchor;
  std::array<double, 4> target{};
};

inline constexpr double kMaxLogScale = 4.0;

/// Decoded, image-normalized box for one anchor's deltas (dx, dy, dw, dh).
template <std::floating_point T>
std::array<T, 4> decode_anchor(const Box& a, std::span<const T> d, double img_w, double img_h) {
  const T dw = std::clamp(d[2], T(-kMaxLogScale), T(kMaxLogScale));
  const T dh = std::clamp(d[3], T(-kMaxLogScale), T(kMaxLogScale));
  return {static_cast<T>((a.x + d[0] * a.w) / img_w), static_cast<T>((a.y + d[1] * a.h) / img_h),
          static_cast<T>(a.w * std::exp(dw) / img_w), static_cast<T>(a.h * std::exp(dh) / img_h)};
}

/// Salient-region objective over the anchors of one image:
/// sum_i [(1 - l2) * l_reg(T_i, T*_i) (positives) + l2 * l_cls(rho_i, rho*_i)],
/// divided by max(1, #positives). Ignored anchors contribute nothing.
template <std::floating_point T>
T srn_loss(std::span<const T> deltas, std::span<const T> logits,
           std::span<const AnchorTarget> targets, double img_w, double img_h, T lambda2,
           std::span<T> g_deltas = {}, std::span<T> g_logits = {}, T weight = 1) {
  int positives = 0, labeled = 0;
  for (const auto& t : targets) {
    positives += t.label == 1;
    labeled += t.label >= 0;
  }
  if (labeled == 0) return 0;
  const T norm = T{1} / std::max(1, positives);
  T sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.label < 0) continue;
    sum += lambda2 * l_cls(logits.subspan(2 * i, 2), t.label, detail::sub(g_logits, 2 * i, 2),
                           weight * norm * lambda2);
    if (t.label != 1) continue;
    const auto d = deltas.subspan(4 * i, 4);
    const auto box = decode_anchor<T>(t.anchor, d, img_w, img_h);
    std::array<T, 4> tgt{};
    for (int k = 0; k < 4; ++k) tgt[k] = static_cast<T>(t.target[k]);
    std::array<T, 4> gb{};
    const bool want_grad = !g_deltas.empty();
    sum += (1 - lambda2) * l_reg<T>(box, tgt, want_grad ? std::span<T>(gb) : std::span<T>{},
                                    weight * norm * (1 - lambda2));
    if (want_grad) {
      auto gd = g_deltas.subspan(4 * i, 4);
      gd[0] += gb[0] * static_cast<T>(t.anchor.w / img_w);
      gd[1] += gb[1] * static_cast<T>(t.anchor.h / img_h);
      if (std::abs(d[2]) < kMaxLogScale) gd[2] += gb[2] * box[2];
      if (std::abs(d[3]) < kMaxLogScale) gd[3] += gb[3] * box[3];
    }
  }
  return norm * sum;
}

/// Loss-level view of one region: label, region-relative grasp target, angle
/// bin and segmentation target.
struct RegionLossTarget {
  int label = kIgnoreLabel;
  std::array<double, 4> reg{};
  int bin = 0;
  std::vector<float> mask;
};

/// Region grasp objective. Head layouts per region: reg [2][4], theta [2][50],
/// rho [2], mask [2][14*14]. Positives: l_reg + l3 l_cls(theta) + l3 l_cls(rho)
/// + l_seg on the graspable-class outputs; negatives: l3 l_cls(rho) + l_seg on
/// the non-graspable mask. Divided by max(1, #positives).
template <std::floating_point T>
T rgpn_loss(std::span<const T> reg, std::span<const T> theta, std::span<const T> rho,
            std::span<const T> mask_logits, std::span<const RegionLossTarget> targets, T lambda3,
            std::span<T> g_reg = {}, std::span<T> g_theta = {}, std::span<T> g_rho = {},
            std::span<T> g_mask = {}, T weight = 1) {
  int positives = 0;
  for (const auto& t : targets) positives += t.label == 1;
  const T norm = T{1} / std::max(1, positives);
  const T w = weight * norm;
  T sum = 0;
  std::vector<T> mask_t(kMaskCells);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.label < 0) continue;
    const std::size_t cls = t.label == 1 ? 1 : 0;
    sum += lambda3 * l_cls(rho.subspan(2 * i, 2), t.label, detail::sub(g_rho, 2 * i, 2), w * lambda3);
    if (!t.mask.empty()) {
      std::copy(t.mask.begin(), t.mask.end(), mask_t.begin());
      const std::size_t off = (i * kRegionClasses + cls) * kMaskCells;
      sum += l_seg_logits<T>(mask_logits.subspan(off, kMaskCells), mask_t,
                             detail::sub(g_mask, off, kMaskCells), w);
    }
    if (t.label != 1) continue;
    std::array<T, 4> tgt{};
    for (int k = 0; k < 4; ++k) tgt[k] = static_cast<T>(t.reg[k]);
    const std::size_t roff = (i * kRegionClasses + 1) * 4;
    sum += l_reg<T>(reg.subspan(roff, 4), tgt, detail::sub(g_reg, roff, 4), w);
    const std::size_t toff = (i * kRegionClasses + 1) * kAngleBins;
    sum += lambda3 *
           l_cls(theta.subspan(toff, kAngleBins), t.bin, detail::sub(g_theta, toff, kAngleBins),
                 w * lambda3);
  }
  return norm * sum;
}

/// Pixel objective for one image:
/// l_reg(M_xy) + l_reg(M_w | S) + l_reg(M_h | S) + mean_{p in S} l_cls(M_theta(p)).
/// `theta_logits` is channel-major [50][H*W]. The M_xy denominator is floored
/// at 1, so an empty support still yields a defined M_xy term.
template <std::floating_point T>
T pgn_loss(std::span<const T> xy, std::span<const T> mw, std::span<const T> mh,
           std::span<const T> theta_logits, const PixelTargets& tgt, std::span<T> g_xy = {},
           std::span<T> g_w = {}, std::span<T> g_h = {}, std::span<T> g_theta = {}, T weight = 1) {
  const std::size_t n = tgt.xy.size();
  if (xy.size() != n || mw.size() != n || mh.size() != n || theta_logits.size() != n * kAngleBins)
    throw std::invalid_argument("pgn_loss: map size mismatch");
  T diff2 = 0, tgt2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diff2 += (xy[i] - tgt.xy[i]) * (xy[i] - tgt.xy[i]);
    tgt2 += static_cast<T>(tgt.xy[i]) * tgt.xy[i];
  }
  const T den = std::max(T{1}, std::sqrt(tgt2));
  const T num = std::sqrt(diff2);
  T total = num / den;
  if (!g_xy.empty() && num > 0)
    for (std::size_t i = 0; i < n; ++i) g_xy[i] += weight * (xy[i] - tgt.xy[i]) / (num * den);

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i)
    if (tgt.in_support(i)) support.push_back(i);
  if (support.empty()) return total;

  std::vector<T> pw, ph, tw, th, gw, gh;
  for (std::size_t i : support) {
    pw.push_back(mw[i]);
    ph.push_back(mh[i]);
    tw.push_back(tgt.w[i]);
    th.push_back(tgt.h[i]);
  }
  gw.assign(support.size(), 0);
  gh.assign(support.size(), 0);
  const bool want = !g_w.empty();
  total += l_reg<T>(pw, tw, want ? std::span<T>(gw) : std::span<T>{}, weight);
  total += l_reg<T>(ph, th, want ? std::span<T>(gh) : std::span<T>{}, weight);
  if (want)
    for (std::size_t k = 0; k < support.size(); ++k) {
      g_w[support[k]] += gw[k];
      g_h[support[k]] += gh[k];
    }

  const T inv = T{1} / static_cast<T>(support.size());
  std::vector<T> logits(kAngleBins), gl(kAngleBins);
  T cls = 0;
  for (std::size_t i : support) {
    for (int b = 0; b < kAngleBins; ++b) logits[b] = theta_logits[b * n + i];
    std::fill(gl.begin(), gl.end(), T{0});
    cls += l_cls<T>(logits, tgt.theta[i], g_theta.empty() ? std::span<T>{} : std::span<T>(gl),
                    weight * inv);
    if (!g_theta.empty())
      for (int b = 0; b < kAngleBins; ++b) g_theta[b * n + i] += gl[b];
  }
  return total + cls * inv;
}

}  // namespace dsgd
