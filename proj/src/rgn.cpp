#include "dsgd/rgn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

float sigmoidf(float v) { return 1.0f / (1.0f + std::exp(-v)); }
float softplusf(float v) { return v > 20 ? v : std::log1p(std::exp(v)); }

// (sigmoid, sigmoid, softplus, softplus) and its elementwise derivative.
std::array<float, 4> region_box(const float* z, std::array<float, 4>* d = nullptr) {
  std::array<float, 4> r{sigmoidf(z[0]), sigmoidf(z[1]), softplusf(z[2]), softplusf(z[3])};
  if (d) *d = {r[0] * (1 - r[0]), r[1] * (1 - r[1]), sigmoidf(z[2]), sigmoidf(z[3])};
  return r;
}

}  // namespace

void RgnConfig::validate() const {
  if (anchor_scales.empty() || anchor_ratios.empty()) throw ConfigError("anchor set is empty");
  for (double s : anchor_scales)
    if (!(s > 0)) throw ConfigError("anchor scales must be positive");
  for (double r : anchor_ratios)
    if (!(r > 0)) throw ConfigError("anchor ratios must be positive");
  if (!(nms_iou > 0 && nms_iou <= 1)) throw ConfigError("nms_iou must be in (0, 1]");
  if (top_k < 1 || anchor_batch < 2 || region_batch < 2 || srn_channels < 1 || mask_channels < 1 ||
      roi_size < 1)
    throw ConfigError("region network sizes must be positive");
}

std::vector<Box> make_anchors(int fh, int fw, int img_w, int img_h, const RgnConfig& c) {
  const double side = std::min(img_w, img_h);
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(fh) * fw * c.anchors_per_cell());
  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x)
      for (double s : c.anchor_scales)
        for (double r : c.anchor_ratios) {
          const double len = s * side;
          out.push_back({(x + 0.5) * kFeatureStride - 0.5, (y + 0.5) * kFeatureStride - 0.5,
                         len * std::sqrt(r), len / std::sqrt(r)});
        }
  return out;
}

std::vector<AnchorTarget> label_anchors(std::span<const Box> anchors, const Sample& sample, int batch,
                                        std::mt19937_64& rng) {
  const double W = sample.image.width, H = sample.image.height;
  std::vector<Box> gts;
  for (const auto& g : sample.grasps) gts.push_back(bounding_box(g));
  const std::size_t n = anchors.size();
  std::vector<AnchorTarget> out(n);
  std::vector<double> best(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(gts.size(), -1.0);
  std::vector<int> gt_anchor(gts.size(), -1);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].anchor = anchors[i];
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const double v = iou(anchors[i], gts[k]);
      if (v > best[i]) {
        best[i] = v;
        best_gt[i] = static_cast<int>(k);
      }
      if (v > gt_best[k]) {
        gt_best[k] = v;
        gt_anchor[k] = static_cast<int>(i);
      }
    }
    if (best[i] >= kPositiveIou) out[i].label = 1;
    else if (best[i] < kNegativeIou) out[i].label = 0;
  }
  for (std::size_t k = 0; k < gts.size(); ++k)
    if (gt_anchor[k] >= 0 && gt_best[k] > 0) {
      out[gt_anchor[k]].label = 1;
      best_gt[gt_anchor[k]] = static_cast<int>(k);
    }
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i].label == 1) {
      const Box& g = gts[best_gt[i]];
      out[i].target = {g.x / W, g.y / H, g.w / W, g.h / H};
      pos.push_back(static_cast<int>(i));
    } else if (out[i].label == 0) {
      neg.push_back(static_cast<int>(i));
    }
  }
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const std::size_t keep_pos = std::min<std::size_t>(pos.size(), batch / 2);
  const std::size_t keep_neg = std::min<std::size_t>(neg.size(), batch - keep_pos);
  for (std::size_t i = keep_pos; i < pos.size(); ++i) out[pos[i]].label = kIgnoreLabel;
  for (std::size_t i = keep_neg; i < neg.size(); ++i) out[neg[i]].label = kIgnoreLabel;
  return out;
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double thr,
                     int max_keep) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> keep;
  for (int i : order) {
    if (static_cast<int>(keep.size()) >= max_keep) break;
    bool ok = true;
    for (int k : keep)
      if (iou(boxes[i], boxes[k]) > thr) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(i);
  }
  return keep;
}

ag::RoiBox to_feature_roi(const Box& box, int batch, bool* degenerate) {
  Box b = box;
  bool widened = false;
  if (!(b.w >= 1)) {
    b.w = 1;
    widened = true;
  }
  if (!(b.h >= 1)) {
    b.h = 1;
    widened = true;
  }
  if (degenerate) *degenerate = widened;
  auto f = [](double v) { return static_cast<Scalar>((v + 0.5) / kFeatureStride - 0.5); };
  return {batch, f(b.x0()), f(b.y0()), f(b.x1()), f(b.y1())};
}

ag::Var roi_pool(const ag::Var& features, std::span<const ag::RoiBox> rois, int size) {
  return ag::roi_align(features, rois, size, size);
}

std::array<double, 4> region_target(const GraspRect& r, const Box& region) {
  return {(r.x - region.x0()) / region.w, (r.y - region.y0()) / region.h, r.w / region.w,
          r.h / region.h};
}

GraspRect decode_region(std::span<const float> raw, const Box& region, int bin) {
  const auto r = region_box(raw.data());
  return GraspRect::make(region.x0() + r[0] * region.w, region.y0() + r[1] * region.h,
                         std::max(1e-3, r[2] * region.w), std::max(1e-3, r[3] * region.h),
                         bin_to_angle({bin}));
}

Srn::Srn(int in, const RgnConfig& c)
    : conv_(in, c.srn_channels, 3, 1, 1, true),
      deltas_(c.srn_channels, 4 * c.anchors_per_cell(), 1, 1, 0, true),
      scores_(c.srn_channels, 2 * c.anchors_per_cell(), 1, 1, 0, true) {}

Srn::Output Srn::forward(const ag::Var& features) {
  ag::Var h = ag::relu(conv_(features));
  return {deltas_(h), scores_(h)};
}

void Srn::collect(nn::ParamSet& ps, const std::string& prefix) {
  conv_.collect(ps, prefix + ".conv", true);
  deltas_.collect(ps, prefix + ".deltas", true);
  scores_.collect(ps, prefix + ".scores", true);
}

Rgpn::Rgpn(int in, const BackboneConfig& b, const RgnConfig& c)
    : block_(in, b.rgn_layers, b.growth_rate, b.bottleneck_factor),
      fc_reg_(block_.out_channels(), kRegionClasses * 4),
      fc_theta_(block_.out_channels(), kRegionClasses * kAngleBins),
      fc_rho_(block_.out_channels(), kRegionClasses),
      up_(block_.out_channels(), c.mask_channels, 2, 2, 0, false),
      up_bn_(c.mask_channels),
      mask_(c.mask_channels, kRegionClasses, 1, 1, 0, true) {}

Rgpn::Output Rgpn::forward(const ag::Var& pooled, bool training) {
  ag::Var f = block_.forward(pooled, training);
  ag::Var g = ag::global_avg_pool(f);
  ag::Var m = mask_(ag::relu(up_bn_(up_(f), training)));
  return {fc_reg_(g), fc_theta_(g), fc_rho_(g), m};
}

void Rgpn::collect(nn::ParamSet& ps, const std::string& prefix) {
  block_.collect(ps, prefix + ".block4", true);
  fc_reg_.collect(ps, prefix + ".fc_reg", true);
  fc_theta_.collect(ps, prefix + ".fc_theta", true);
  fc_rho_.collect(ps, prefix + ".fc_rho", true);
  up_.collect(ps, prefix + ".up", true);
  up_bn_.collect(ps, prefix + ".up_bn", true);
  mask_.collect(ps, prefix + ".mask", true);
}

std::vector<std::pair<Box, double>> srn_proposals(const Srn::Output& out, int n,
                                                  std::span<const Box> anchors, int img_w, int img_h,
                                                  const RgnConfig& c, int max_keep) {
  const Tensor& D = out.deltas->value;
  const Tensor& S = out.scores->value;
  const int A = c.anchors_per_cell(), fh = D.dim(2), fw = D.dim(3);
  if (static_cast<std::size_t>(fh) * fw * A != anchors.size())
    throw std::invalid_argument("srn_proposals: anchor count mismatch");
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x)
      for (int a = 0; a < A; ++a) {
        const Box& anc = anchors[(static_cast<std::size_t>(y) * fw + x) * A + a];
        std::array<float, 4> d{};
        for (int k = 0; k < 4; ++k) d[k] = D.at(n, 4 * a + k, y, x);
        const auto b = decode_anchor<float>(anc, d, img_w, img_h);
        Box box{b[0] * img_w, b[1] * img_h, b[2] * img_w, b[3] * img_h};
        const double x0 = std::clamp(box.x0(), -0.5, img_w - 0.5);
        const double x1 = std::clamp(box.x1(), -0.5, img_w - 0.5);
        const double y0 = std::clamp(box.y0(), -0.5, img_h - 0.5);
        const double y1 = std::clamp(box.y1(), -0.5, img_h - 0.5);
        boxes.push_back({(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0});
        const double s0 = S.at(n, 2 * a, y, x), s1 = S.at(n, 2 * a + 1, y, x);
        scores.push_back(1.0 / (1.0 + std::exp(s0 - s1)));
      }
  std::vector<std::pair<Box, double>> res;
  for (int i : nms(boxes, scores, c.nms_iou, max_keep))
    if (boxes[i].w > 0 && boxes[i].h > 0) res.emplace_back(boxes[i], scores[i]);
  return res;
}

ag::Var srn_batch_loss(const Srn::Output& out, std::span<const std::vector<AnchorTarget>> targets,
                       int img_w, int img_h, double lambda2) {
  const Tensor& D = out.deltas->value;
  const int n = D.dim(0), fh = D.dim(2), fw = D.dim(3), A = D.dim(1) / 4;
  if (static_cast<int>(targets.size()) != n) throw std::invalid_argument("srn_batch_loss: batch size");
  std::vector<std::vector<AnchorTarget>> tg(targets.begin(), targets.end());
  return ag::eager_loss({out.deltas, out.scores}, [=](auto in, auto grads) {
    const std::size_t na = static_cast<std::size_t>(fh) * fw * A;
    std::vector<float> d(4 * na), s(2 * na), gd(4 * na), gs(2 * na);
    const float w = 1.0f / n;
    float total = 0;
    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x)
          for (int a = 0; a < A; ++a) {
            const std::size_t j = (static_cast<std::size_t>(y) * fw + x) * A + a;
            for (int k = 0; k < 4; ++k) d[4 * j + k] = in[0]->at(i, 4 * a + k, y, x);
            for (int k = 0; k < 2; ++k) s[2 * j + k] = in[1]->at(i, 2 * a + k, y, x);
          }
      std::fill(gd.begin(), gd.end(), 0.0f);
      std::fill(gs.begin(), gs.end(), 0.0f);
      total += w * srn_loss<float>(d, s, tg[i], img_w, img_h, static_cast<float>(lambda2), gd, gs, w);
      for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x)
          for (int a = 0; a < A; ++a) {
            const std::size_t j = (static_cast<std::size_t>(y) * fw + x) * A + a;
            for (int k = 0; k < 4; ++k) grads[0]->at(i, 4 * a + k, y, x) += gd[4 * j + k];
            for (int k = 0; k < 2; ++k) grads[1]->at(i, 2 * a + k, y, x) += gs[2 * j + k];
          }
    }
    return total;
  });
}

ag::Var rgpn_batch_loss(const Rgpn::Output& out, std::span<const RegionLossTarget> targets,
                        double lambda3) {
  const int r = out.reg->value.dim(0);
  if (static_cast<int>(targets.size()) != r) throw std::invalid_argument("rgpn_batch_loss: region count");
  std::vector<RegionLossTarget> tg(targets.begin(), targets.end());
  return ag::eager_loss({out.reg, out.theta, out.rho, out.mask}, [=](auto in, auto grads) {
    const std::size_t nreg = static_cast<std::size_t>(r) * kRegionClasses * 4;
    std::vector<float> box(nreg), deriv(nreg), gbox(nreg, 0.0f);
    for (std::size_t i = 0; i < nreg; i += 4) {
      std::array<float, 4> d{};
      const auto b = region_box(in[0]->data() + i, &d);
      std::copy(b.begin(), b.end(), box.begin() + i);
      std::copy(d.begin(), d.end(), deriv.begin() + i);
    }
    const float loss = rgpn_loss<float>(box, in[1]->span(), in[2]->span(), in[3]->span(), tg,
                                        static_cast<float>(lambda3), gbox, grads[1]->span(),
                                        grads[2]->span(), grads[3]->span(), 1.0f);
    float* gz = grads[0]->data();
    for (std::size_t i = 0; i < nreg; ++i) gz[i] += gbox[i] * deriv[i];
    return loss;
  });
}

std::vector<RegionLossTarget> region_loss_targets(const RegionTargets& t) {
  std::vector<RegionLossTarget> out(t.boxes.size());
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    out[i].label = t.labels[i];
    out[i].mask = t.masks[i];
    if (t.labels[i] == 1 && t.targets[i]) {
      out[i].reg = region_target(*t.targets[i], t.boxes[i]);
      out[i].bin = angle_to_bin(t.targets[i]->theta).index;
    }
  }
  return out;
}

RegionTargets sample_regions(const RegionTargets& t, int batch, std::mt19937_64& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    if (t.labels[i] == 1) pos.push_back(i);
    else if (t.labels[i] == 0) neg.push_back(i);
  }
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  pos.resize(std::min<std::size_t>(pos.size(), batch / 2));
  neg.resize(std::min<std::size_t>(neg.size(), batch - pos.size()));
  RegionTargets out;
  for (const auto* idx : {&pos, &neg})
    for (std::size_t i : *idx) {
      out.boxes.push_back(t.boxes[i]);
      out.labels.push_back(t.labels[i]);
      out.targets.push_back(t.targets[i]);
      out.masks.push_back(t.masks[i]);
    }
  return out;
}

std::vector<Box> jittered_gt_boxes(const Sample& sample, double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-jitter, jitter);
  std::vector<Box> out;
  for (const auto& g : sample.grasps) {
    const Box b = bounding_box(g);
    out.push_back({b.x + u(rng) * b.w, b.y + u(rng) * b.h, b.w * (1 + u(rng)), b.h * (1 + u(rng))});
  }
  return out;
}

}  // namespace dsgd
