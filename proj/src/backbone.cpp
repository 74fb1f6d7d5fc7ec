#include "dsgd/backbone.hpp"

#include "dsgd/error.hpp"

namespace dsgd {

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::lite() {
  BackboneConfig c;
  c.growth_rate = 32;
  c.block_layers = {6, 12, 24};
  c.rgn_layers = 2;
  c.ggn_layers = 2;
  c.gen_layers = 2;
  c.pgn_layers = 2;
  c.stem_channels = 64;
  return c;
}

void BackboneConfig::validate() const {
  if (growth_rate < 1) throw ConfigError("growth_rate must be >= 1");
  for (int l : block_layers)
    if (l < 1) throw ConfigError("dense block layer counts must be >= 1");
  if (rgn_layers < 1 || ggn_layers < 1 || gen_layers < 1 || pgn_layers < 1)
    throw ConfigError("head dense block layer counts must be >= 1");
  if (stem_channels < 1 || bottleneck_factor < 1) throw ConfigError("stem/bottleneck widths must be >= 1");
  if (!(compression > 0 && compression <= 1)) throw ConfigError("compression must lie in (0, 1]");
}

int BackboneConfig::block_in(int block) const {
  return block == 0 ? stem_channels : transition_out(block - 1);
}

int BackboneConfig::block_out(int block) const {
  return block_in(block) + block_layers.at(block) * growth_rate;
}

int BackboneConfig::transition_out(int block) const {
  return std::max(1, static_cast<int>(block_out(block) * compression));
}

Tensor image_batch(std::span<const Image* const> images) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const int h = images[0]->height, w = images[0]->width;
  Tensor t({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = *images[i];
    if (im.width != w || im.height != h || im.channels != 3)
      throw std::invalid_argument("image batch needs equally sized 3-channel images");
    Scalar* dst = t.data() + i * im.data.size();
    for (std::size_t k = 0; k < im.data.size(); ++k) dst[k] = im.data[k] / Scalar{255} - Scalar{0.5};
  }
  return t;
}

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
  config_.validate();
  const int s = config_.stem_channels;
  stem1_ = nn::ConvBnRelu(3, s, 3, 2, 1);
  stem2_ = nn::ConvBnRelu(s, s, 3, 1, 1);
  for (int b = 0; b < 3; ++b) {
    blocks_[b] = nn::DenseBlock(config_.block_in(b), config_.block_layers[b], config_.growth_rate,
                                config_.bottleneck_factor);
    if (b < 2) transitions_[b] = nn::Transition(config_.block_out(b), config_.transition_out(b));
  }
}

BackboneOutput Backbone::forward(const ag::Var& images, bool training) {
  const Tensor& x = images->value;
  if (x.rank() != 4 || x.dim(1) != 3) throw ConfigError("backbone expects N x 3 x H x W input");
  if (x.dim(2) % kFeatureStride || x.dim(3) % kFeatureStride)
    throw ConfigError("input height and width must be multiples of " + std::to_string(kFeatureStride) +
                      ", got " + x.shape_string());
  ag::Var stem = ag::avg_pool2(stem2_(stem1_(images, training), training));
  ag::Var f = blocks_[0].forward(stem, training);
  f = transitions_[0](f, training);
  f = blocks_[1].forward(f, training);
  f = transitions_[1](f, training);
  f = blocks_[2].forward(f, training);
  return {f, stem};
}

void Backbone::collect(nn::ParamSet& ps, const std::string& prefix) {
  stem1_.collect(ps, prefix + ".stem1", false);
  stem2_.collect(ps, prefix + ".stem2", false);
  for (int b = 0; b < 3; ++b) {
    blocks_[b].collect(ps, prefix + ".block" + std::to_string(b + 1), false);
    if (b < 2) transitions_[b].conv.collect(ps, prefix + ".transition" + std::to_string(b + 1), false);
  }
}

}  // namespace dsgd
