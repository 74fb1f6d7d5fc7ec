#pragma once

#include <random>
#include <span>
#include <vector>

#include "dsgd/backbone.hpp"
#include "dsgd/dataset.hpp"
#include "dsgd/head_losses.hpp"

namespace dsgd {

struct RgnConfig {
  /// Anchor side lengths as fractions of the shorter image side.
  std::vector<double> anchor_scales{0.1875, 0.3125, 0.47};
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  double nms_iou = 0.7;
  /// Regions kept after NMS at inference.
  int top_k = 128;
  /// Anchors sampled per image for the salient-region loss.
  int anchor_batch = 32;
  /// Regions sampled per image for the region grasp loss.
  int region_batch = 16;
  int srn_channels = 32;
  int mask_channels = 32;
  int roi_size = 7;

  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_ratios.size());
  }
  void validate() const;
};

/// All anchors of a fh x fw stride-16 map, ordered (y, x, anchor).
std::vector<Box> make_anchors(int fh, int fw, int img_w, int img_h, const RgnConfig& config);

/// Positive: IoU >= kPositiveIou with some ground-truth box, or the best
/// anchor of a ground truth. Negative: best IoU < kNegativeIou. At most
/// `batch` anchors keep their label (half positive at most), the rest are
/// ignored.
std::vector<AnchorTarget> label_anchors(std::span<const Box> anchors, const Sample& sample,
                                        int batch, std::mt19937_64& rng);

/// Greedy non-maximum suppression; returns kept indices in score order.
std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold,
                     int max_keep);

/// Image-coordinate box to stride-16 feature coordinates. Boxes under one
/// pixel on a side are widened to one pixel around their center; `degenerate`
/// reports whether that happened.
ag::RoiBox to_feature_roi(const Box& box, int batch, bool* degenerate = nullptr);
/// Bilinear crop-and-resize of every region to size x size.
ag::Var roi_pool(const ag::Var& features, std::span<const ag::RoiBox> rois, int size);

/// Region-relative regression target ((x - x0) / w, (y - y0) / h, w / w_r, h / h_r).
std::array<double, 4> region_target(const GraspRect& rect, const Box& region);
GraspRect decode_region(std::span<const float> raw, const Box& region, int bin);

/// Salient region network: 3x3 conv + ReLU, then per-anchor 1x1 heads for
/// box deltas and two-way saliency scores.
class Srn {
 public:
  struct Output {
    ag::Var deltas;  // N x 4A x h x w
    ag::Var scores;  // N x 2A x h x w
  };
  Srn() = default;
  Srn(int in_channels, const RgnConfig& config);
  Output forward(const ag::Var& features);
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  nn::Conv2d conv_, deltas_, scores_;
};

/// Region grasp prediction network over pooled regions.
class Rgpn {
 public:
  struct Output {
    ag::Var reg;    // R x (2*4)
    ag::Var theta;  // R x (2*50)
    ag::Var rho;    // R x 2
    ag::Var mask;   // R x 2 x 14 x 14
  };
  Rgpn() = default;
  Rgpn(int in_channels, const BackboneConfig& backbone, const RgnConfig& config);
  Output forward(const ag::Var& pooled, bool training);
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  nn::DenseBlock block_;
  nn::Linear fc_reg_, fc_theta_, fc_rho_;
  nn::ConvTranspose2d up_;
  nn::BatchNorm2d up_bn_;
  nn::Conv2d mask_;
};

/// One detected region with its best grasp.
struct RegionGrasp {
  Box region;
  GraspRect rect;
  double saliency = 0;
  std::vector<float> mask;  // class-1 mask probabilities, kMaskSize^2
};

/// Decoded SRN proposals for image `n` (no gradient), NMS-filtered.
std::vector<std::pair<Box, double>> srn_proposals(const Srn::Output& out, int n, std::span<const Box> anchors,
                                                  int img_w, int img_h, const RgnConfig& config,
                                                  int max_keep);

/// Per-image SRN objective averaged over the batch.
ag::Var srn_batch_loss(const Srn::Output& out, std::span<const std::vector<AnchorTarget>> targets,
                       int img_w, int img_h, double lambda2);
/// RGPN objective over all sampled regions of a batch.
ag::Var rgpn_batch_loss(const Rgpn::Output& out, std::span<const RegionLossTarget> targets,
                        double lambda3);

/// Converts encoded region labels to loss targets.
std::vector<RegionLossTarget> region_loss_targets(const RegionTargets& t);

/// Keeps at most `batch` labeled regions (at most half positive), dropping
/// the rest.
RegionTargets sample_regions(const RegionTargets& t, int batch, std::mt19937_64& rng);

/// Ground-truth boxes scaled and shifted by up to `jitter` of their size.
std::vector<Box> jittered_gt_boxes(const Sample& sample, double jitter, std::mt19937_64& rng);

}  // namespace dsgd
