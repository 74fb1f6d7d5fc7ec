#include "dsgd/ggn.hpp"

#include <algorithm>
#include <cmath>

#include "dsgd/head_losses.hpp"

namespace dsgd {

namespace {

inline constexpr int kCoordChannels = 2;

// Constant x / y ramps in [-1, 1] appended to the stride-16 features so the
// pooled descriptor can carry absolute position.
ag::Var coord_channels(int n, int h, int w) {
  Tensor t({n, kCoordChannels, h, w});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        t.at(i, 0, y, x) = w > 1 ? -1 + 2.0f * x / (w - 1) : 0;
        t.at(i, 1, y, x) = h > 1 ? -1 + 2.0f * y / (h - 1) : 0;
      }
  return ag::constant(std::move(t));
}

}  // namespace

std::array<double, 4> ggpn_target(const GraspRect& r, int width, int height) {
  return {r.x / width, r.y / height, r.w / width, r.h / height};
}

GraspRect decode_global(std::span<const float> reg, std::span<const float> theta_logits, int width,
                        int height) {
  const auto box = ggpn_box<float>(reg);
  const int bin = static_cast<int>(std::max_element(theta_logits.begin(), theta_logits.end()) -
                                   theta_logits.begin());
  return GraspRect::make(box[0] * width, box[1] * height, std::max(1e-3f, box[2] * width),
                         std::max(1e-3f, box[3] * height), bin_to_angle({bin}));
}

const GraspRect& ggpn_training_target(const Sample& sample, std::mt19937_64& rng) {
  if (sample.grasps.empty()) throw std::invalid_argument("sample has no grasps");
  double mx = 0, my = 0;
  for (const auto& g : sample.grasps) {
    mx += g.x;
    my += g.y;
  }
  mx /= sample.grasps.size();
  my /= sample.grasps.size();
  double best = 1e300;
  for (const auto& g : sample.grasps) best = std::min(best, std::hypot(g.x - mx, g.y - my));
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < sample.grasps.size(); ++i)
    if (std::hypot(sample.grasps[i].x - mx, sample.grasps[i].y - my) <= best + 1.0) ties.push_back(i);
  std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
  return sample.grasps[ties[pick(rng)]];
}

Ggpn::Ggpn(const BackboneConfig& c)
    : block_(c.output_channels() + kCoordChannels, c.ggn_layers, c.growth_rate, c.bottleneck_factor),
      fc_reg_(block_.out_channels(), 4),
      fc_theta_(block_.out_channels(), kAngleBins) {}

Ggpn::Output Ggpn::forward(const ag::Var& features, bool training) {
  const Tensor& f = features->value;
  ag::Var x = ag::concat_channels({features, coord_channels(f.dim(0), f.dim(2), f.dim(3))});
  ag::Var pooled = ag::global_avg_pool(block_.forward(x, training));
  return {fc_reg_(pooled), fc_theta_(pooled)};
}

void Ggpn::collect(nn::ParamSet& ps, const std::string& prefix) {
  block_.collect(ps, prefix + ".block5", true);
  fc_reg_.collect(ps, prefix + ".fc_reg", true);
  fc_theta_.collect(ps, prefix + ".fc_theta", true);
}

Gen::Gen(const BackboneConfig& c)
    : trunk_(c),
      block_(c.output_channels(), c.gen_layers, c.growth_rate, c.bottleneck_factor),
      fc_(block_.out_channels(), 2) {}

ag::Var Gen::forward(const ag::Var& grasp_images, bool training) {
  auto feats = trunk_.forward(grasp_images, training);
  return fc_(ag::global_avg_pool(block_.forward(feats.features, training)));
}

void Gen::collect(nn::ParamSet& ps, const std::string& prefix) {
  trunk_.collect(ps, prefix + ".trunk");
  block_.collect(ps, prefix + ".block6", true);
  fc_.collect(ps, prefix + ".fc_rho", true);
}

ag::Var ggpn_batch_loss(const Ggpn::Output& out, std::span<const std::array<double, 4>> targets,
                        std::span<const int> bins, double lambda1) {
  const int n = out.reg->value.dim(0);
  if (static_cast<int>(targets.size()) != n || static_cast<int>(bins.size()) != n)
    throw std::invalid_argument("ggpn_batch_loss: target count mismatch");
  std::vector<std::array<double, 4>> tg(targets.begin(), targets.end());
  std::vector<int> bn(bins.begin(), bins.end());
  return ag::eager_loss({out.reg, out.theta}, [=](auto in, auto grads) {
    const float w = 1.0f / n;
    float total = 0;
    for (int i = 0; i < n; ++i) {
      std::span<const float> z(in[0]->data() + 4 * i, 4);
      const auto box = ggpn_box<float>(z);
      std::array<float, 4> t{};
      for (int k = 0; k < 4; ++k) t[k] = static_cast<float>(tg[i][k]);
      std::array<float, 4> gbox{};
      total += w * ggpn_loss<float>(box, std::span<const float>(in[1]->data() + kAngleBins * i, kAngleBins),
                                    t, bn[i], static_cast<float>(lambda1), gbox,
                                    std::span<float>(grads[1]->data() + kAngleBins * i, kAngleBins), w);
      float* gz = grads[0]->data() + 4 * i;
      gz[0] += gbox[0];
      gz[1] += gbox[1];
      gz[2] += gbox[2] / (1 + std::exp(-z[2]));
      gz[3] += gbox[3] / (1 + std::exp(-z[3]));
    }
    return total;
  });
}

ag::Var gen_batch_loss(const ag::Var& rho_logits, std::span<const int> labels) {
  const int n = rho_logits->value.dim(0);
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("gen_batch_loss: label count");
  std::vector<int> lb(labels.begin(), labels.end());
  return ag::eager_loss({rho_logits}, [=](auto in, auto grads) {
    const float w = 1.0f / n;
    float total = 0;
    for (int i = 0; i < n; ++i)
      total += w * gen_loss<float>(std::span<const float>(in[0]->data() + 2 * i, 2), lb[i],
                                   std::span<float>(grads[0]->data() + 2 * i, 2), w);
    return total;
  });
}

double gen_confidence(std::span<const float> z) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  return e1 / (e0 + e1);
}

}  // namespace dsgd
