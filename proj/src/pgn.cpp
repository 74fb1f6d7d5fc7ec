#include "dsgd/pgn.hpp"

#include <algorithm>
#include <cmath>

#include "dsgd/error.hpp"
#include "dsgd/head_losses.hpp"

namespace dsgd {

namespace {

float sigmoidf(float v) { return 1.0f / (1.0f + std::exp(-v)); }
float softplusf(float v) { return v > 20 ? v : std::log1p(std::exp(v)); }

float size_scale(int w, int h) { return static_cast<float>(kPixelSizeScale * std::min(w, h)); }

}  // namespace

int PixelGraspMaps::angle_bin(std::size_t p) const {
  const std::size_t n = xy.size();
  int best = 0;
  for (int b = 1; b < kAngleBins; ++b)
    if (theta[b * n + p] > theta[best * n + p]) best = b;
  return best;
}

Pgn::Pgn(const BackboneConfig& c, int dec)
    : block_(c.output_channels(), c.pgn_layers, c.growth_rate, c.bottleneck_factor),
      up1_(block_.out_channels(), dec, 2, 2, 0, false),
      up2_(dec, dec, 2, 2, 0, false),
      up3_(dec, dec, 2, 2, 0, false),
      up4_(dec, dec, 2, 2, 0, false),
      bn1_(dec),
      bn2_(dec),
      bn3_(dec),
      bn4_(dec),
      fuse_(dec + c.stem_output_channels(), dec, 3, 1, 1),
      out_(dec, kPixelChannels, 1, 1, 0, true) {
  if (dec < 1) throw ConfigError("decoder channels must be positive");
}

ag::Var Pgn::forward(const BackboneOutput& trunk, bool training) {
  ag::Var x = block_.forward(trunk.features, training);
  x = ag::relu(bn1_(up1_(x), training));
  x = ag::relu(bn2_(up2_(x), training));
  x = fuse_(ag::concat_channels({x, trunk.stem}), training);
  x = ag::relu(bn3_(up3_(x), training));
  x = ag::relu(bn4_(up4_(x), training));
  return out_(x);
}

void Pgn::collect(nn::ParamSet& ps, const std::string& prefix) {
  block_.collect(ps, prefix + ".block7", true);
  up1_.collect(ps, prefix + ".up1", true);
  bn1_.collect(ps, prefix + ".bn1", true);
  up2_.collect(ps, prefix + ".up2", true);
  bn2_.collect(ps, prefix + ".bn2", true);
  fuse_.collect(ps, prefix + ".fuse", true);
  up3_.collect(ps, prefix + ".up3", true);
  bn3_.collect(ps, prefix + ".bn3", true);
  up4_.collect(ps, prefix + ".up4", true);
  bn4_.collect(ps, prefix + ".bn4", true);
  out_.collect(ps, prefix + ".out", true);
}

PixelGraspMaps pixel_maps(const Tensor& raw, int n) {
  PixelGraspMaps m;
  m.height = raw.dim(2);
  m.width = raw.dim(3);
  const std::size_t hw = static_cast<std::size_t>(m.width) * m.height;
  const float s = size_scale(m.width, m.height);
  const float* base = raw.data() + static_cast<std::size_t>(n) * kPixelChannels * hw;
  m.xy.resize(hw);
  m.w.resize(hw);
  m.h.resize(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    m.xy[i] = sigmoidf(base[i]);
    m.w[i] = softplusf(base[hw + i]) * s;
    m.h[i] = softplusf(base[2 * hw + i]) * s;
  }
  m.theta.assign(base + 3 * hw, base + kPixelChannels * hw);
  return m;
}

ag::Var pgn_batch_loss(const ag::Var& raw, std::span<const PixelTargets> targets) {
  const Tensor& v = raw->value;
  const int n = v.dim(0), H = v.dim(2), W = v.dim(3);
  if (v.dim(1) != kPixelChannels || static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("pgn_batch_loss: shape mismatch");
  for (const auto& t : targets)
    if (t.width != W || t.height != H) throw std::invalid_argument("pgn_batch_loss: target size");
  std::vector<PixelTargets> tg(targets.begin(), targets.end());
  return ag::eager_loss({raw}, [=](auto in, auto grads) {
    const std::size_t hw = static_cast<std::size_t>(W) * H;
    const float s = size_scale(W, H);
    const float wt = 1.0f / n;
    float total = 0;
    std::vector<float> gxy(hw), gw(hw), gh(hw);
    for (int i = 0; i < n; ++i) {
      const PixelGraspMaps m = pixel_maps(*in[0], i);
      std::fill(gxy.begin(), gxy.end(), 0.0f);
      std::fill(gw.begin(), gw.end(), 0.0f);
      std::fill(gh.begin(), gh.end(), 0.0f);
      const float* z = in[0]->data() + static_cast<std::size_t>(i) * kPixelChannels * hw;
      float* g = grads[0]->data() + static_cast<std::size_t>(i) * kPixelChannels * hw;
      total += wt * pgn_loss<float>(m.xy, m.w, m.h, m.theta, tg[i], gxy, gw, gh,
                                    std::span<float>(g + 3 * hw, kAngleBins * hw), wt);
      for (std::size_t p = 0; p < hw; ++p) {
        g[p] += gxy[p] * m.xy[p] * (1 - m.xy[p]);
        g[hw + p] += gw[p] * s * sigmoidf(z[hw + p]);
        g[2 * hw + p] += gh[p] * s * sigmoidf(z[2 * hw + p]);
      }
    }
    return total;
  });
}

std::vector<PixelGrasp> pgn_decode(const PixelGraspMaps& m, double floor, std::size_t max_count) {
  const int W = m.width, H = m.height;
  const std::size_t hw = static_cast<std::size_t>(W) * H;
  if (m.xy.size() != hw || m.w.size() != hw || m.h.size() != hw || m.theta.size() != hw * kAngleBins)
    throw std::invalid_argument("pgn_decode: map size mismatch");
  std::vector<char> peak(hw, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float v = m.xy[static_cast<std::size_t>(y) * W + x];
      if (!(v >= floor)) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if ((dy || dx) && yy >= 0 && yy < H && xx >= 0 && xx < W &&
              m.xy[static_cast<std::size_t>(yy) * W + xx] > v) {
            is_max = false;
            break;
          }
        }
      peak[static_cast<std::size_t>(y) * W + x] = is_max;
    }

  std::vector<PixelGrasp> out;
  std::vector<char> seen(hw, 0);
  std::vector<std::size_t> stack, members;
  for (std::size_t start = 0; start < hw; ++start) {
    if (!peak[start] || seen[start]) continue;
    members.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      members.push_back(p);
      const int y = static_cast<int>(p / W), x = static_cast<int>(p % W);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const std::size_t q = static_cast<std::size_t>(yy) * W + xx;
          if (peak[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
    double cx = 0, cy = 0;
    for (std::size_t p : members) {
      cx += static_cast<double>(p % W);
      cy += static_cast<double>(p / W);
    }
    cx /= members.size();
    cy /= members.size();
    std::size_t rep = members.front();
    double best = 1e300;
    for (std::size_t p : members) {
      const double d = std::hypot(static_cast<double>(p % W) - cx, static_cast<double>(p / W) - cy);
      if (d < best || (d == best && p < rep)) {
        best = d;
        rep = p;
      }
    }
    const double q = m.xy[rep];
    out.push_back({GraspRect::make(static_cast<double>(rep % W), static_cast<double>(rep / W),
                                   std::max(1e-3f, m.w[rep]), std::max(1e-3f, m.h[rep]),
                                   bin_to_angle({m.angle_bin(rep)}), std::clamp(q, 0.0, 1.0)),
                   q});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PixelGrasp& a, const PixelGrasp& b) { return a.quality > b.quality; });
  if (max_count && out.size() > max_count) out.resize(max_count);
  return out;
}

}  // namespace dsgd
