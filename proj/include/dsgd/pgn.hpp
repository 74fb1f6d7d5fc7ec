#pragma once

#include <span>
#include <vector>

#include "dsgd/backbone.hpp"
#include "dsgd/targets.hpp"

namespace dsgd {

/// Output channels: grasp confidence, width, height, then 50 angle logits.
inline constexpr int kPixelChannels = 3 + kAngleBins;
/// Width and height maps are softplus(z) * kPixelSizeScale * min(W, H).
inline constexpr double kPixelSizeScale = 0.25;
inline constexpr double kPixelFloor = 0.1;

/// Decoded full-resolution maps for one image. `theta` is channel-major
/// [50][H*W] logits; `w` and `h` are in pixels.
struct PixelGraspMaps {
  int width = 0;
  int height = 0;
  std::vector<float> xy, w, h, theta;

  int angle_bin(std::size_t pixel) const;
};

struct PixelGrasp {
  GraspRect rect;
  double quality = 0;
};

/// Pixel grasp network: dense block on the stride-16 features, transposed
/// convolutions back to full resolution with a stride-4 skip from the stem.
class Pgn {
 public:
  Pgn() = default;
  Pgn(const BackboneConfig& config, int decoder_channels);
  /// Returns raw N x 53 x H x W outputs.
  ag::Var forward(const BackboneOutput& trunk, bool training);
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  nn::DenseBlock block_;
  nn::ConvTranspose2d up1_, up2_, up3_, up4_;
  nn::BatchNorm2d bn1_, bn2_, bn3_, bn4_;
  nn::ConvBnRelu fuse_;
  nn::Conv2d out_;
};

/// Applies sigmoid / scaled softplus to image `n` of a raw output.
PixelGraspMaps pixel_maps(const Tensor& raw, int n);

/// Batch-mean pixel objective over raw outputs.
ag::Var pgn_batch_loss(const ag::Var& raw, std::span<const PixelTargets> targets);

/// Grasp candidates at local maxima of the confidence map. Pixels at or
/// above `floor` that are >= all 8 neighbours form 8-connected plateaus; each
/// plateau yields one grasp at the member closest to its centroid. Sorted by
/// confidence, highest first.
std::vector<PixelGrasp> pgn_decode(const PixelGraspMaps& maps, double floor = kPixelFloor,
                                   std::size_t max_count = 0);

}  // namespace dsgd
