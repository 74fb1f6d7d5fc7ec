#pragma once

#include <array>
#include <string>

#include "dsgd/geometry.hpp"
#include "dsgd/nn.hpp"

namespace dsgd {

/// Widths and depths of the dense trunk and of the per-head dense blocks.
struct BackboneConfig {
  int growth_rate = 8;
  std::array<int, 3> block_layers{2, 4, 4};
  int rgn_layers = 2;  // dense block 4
  int ggn_layers = 2;  // dense block 5
  int gen_layers = 2;  // dense block 6 (grasp evaluation network)
  int pgn_layers = 2;  // dense block 7
  int stem_channels = 16;
  int bottleneck_factor = 4;
  double compression = 0.5;

  /// Small configuration used for desk-scale training.
  static BackboneConfig desk();
  /// Growth 32 with (6, 12, 24) trunk blocks.
  static BackboneConfig lite();

  void validate() const;
  int block_in(int block) const;
  int block_out(int block) const;
  int transition_out(int block) const;
  /// Channel count of the stride-16 map handed to the heads.
  int output_channels() const { return block_out(2); }
  int stem_output_channels() const { return stem_channels; }
};

inline constexpr int kFeatureStride = 16;
inline constexpr int kStemStride = 4;

struct BackboneOutput {
  ag::Var features;  // stride 16
  ag::Var stem;      // stride 4
};

/// Converts an 8-bit planar image batch to an N x 3 x H x W tensor in [-0.5, 0.5].
Tensor image_batch(std::span<const Image* const> images);

/// Stem (two 3x3 convs, the first with stride 2, then 2x2 average pooling),
/// then three dense blocks separated by compressing transitions.
class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(const BackboneConfig& config);
  // Parameters are shared handles; a copy would alias the weights.
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;
  Backbone(Backbone&&) = default;
  Backbone& operator=(Backbone&&) = default;

  /// Throws ConfigError unless H and W are multiples of 16.
  BackboneOutput forward(const ag::Var& images, bool training);
  const BackboneConfig& config() const { return config_; }
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  BackboneConfig config_;
  nn::ConvBnRelu stem1_, stem2_;
  std::array<nn::DenseBlock, 3> blocks_;
  std::array<nn::Transition, 2> transitions_;
};

}  // namespace dsgd
