#pragma once

#include <random>
#include <string>
#include <vector>

#include "dsgd/autograd.hpp"

namespace dsgd::nn {

using ag::Var;

enum class ParamKind { Weight, Bias, BnScale, BnShift };

struct ParamEntry {
  std::string name;
  Var var;
  ParamKind kind;
  /// Head parameters are Gaussian-initialized; trunk weights use He init.
  bool head = false;
};

struct BufferEntry {
  std::string name;
  Tensor* tensor;
};

/// Flat, named view over a network's parameters and non-trainable buffers.
class ParamSet {
 public:
  void add(std::string name, Var var, ParamKind kind, bool head) {
    params_.push_back({std::move(name), std::move(var), kind, head});
  }
  void add_buffer(std::string name, Tensor* t) { buffers_.push_back({std::move(name), t}); }
  void append(const ParamSet& other) {
    params_.insert(params_.end(), other.params_.begin(), other.params_.end());
    buffers_.insert(buffers_.end(), other.buffers_.begin(), other.buffers_.end());
  }

  const std::vector<ParamEntry>& params() const { return params_; }
  const std::vector<BufferEntry>& buffers() const { return buffers_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
  }
  void zero_grad() const {
    for (const auto& p : params_) p.var->zero_grad();
  }

 private:
  std::vector<ParamEntry> params_;
  std::vector<BufferEntry> buffers_;
};

struct Conv2d {
  Var weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, bool with_bias);
  Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
  void collect(ParamSet& ps, const std::string& prefix, bool head) const;
};

struct ConvTranspose2d {
  Var weight, bias;
  int stride = 2, pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(int cin, int cout, int k, int stride, int pad, bool with_bias);
  Var operator()(const Var& x) const {
    return ag::conv_transpose2d(x, weight, bias, stride, pad);
  }
  void collect(ParamSet& ps, const std::string& prefix, bool head) const;
};

struct BatchNorm2d {
  Var gamma, beta;
  ag::BatchNormState state;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Var operator()(const Var& x, bool training) { return ag::batch_norm(x, gamma, beta, state, training); }
  void collect(ParamSet& ps, const std::string& prefix, bool head);
};

struct Linear {
  Var weight, bias;

  Linear() = default;
  Linear(int in, int out);
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
  int out_features() const { return weight->value.dim(0); }
  void collect(ParamSet& ps, const std::string& prefix, bool head) const;
};

/// conv -> batch norm -> relu.
struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d bn;

  ConvBnRelu() = default;
  ConvBnRelu(int cin, int cout, int k, int stride, int pad)
      : conv(cin, cout, k, stride, pad, false), bn(cout) {}
  Var operator()(const Var& x, bool training) { return ag::relu(bn(conv(x), training)); }
  void collect(ParamSet& ps, const std::string& prefix, bool head) {
    conv.collect(ps, prefix + ".conv", head);
    bn.collect(ps, prefix + ".bn", head);
  }
};

/// Bottleneck dense layer: 1x1 conv to bottleneck_factor * growth channels,
/// then 3x3 conv to `growth` channels, each followed by BN and ReLU.
struct DenseLayer {
  ConvBnRelu bottleneck;
  ConvBnRelu conv;

  DenseLayer(int cin, int growth, int bottleneck_factor)
      : bottleneck(cin, bottleneck_factor * growth, 1, 1, 0),
        conv(bottleneck_factor * growth, growth, 3, 1, 1) {}
  Var operator()(const Var& x, bool training) { return conv(bottleneck(x, training), training); }
};

/// Dense block: every layer consumes the concatenation of the block input and
/// all earlier layer outputs; the block emits that concatenation, so output
/// channels = in + layers * growth and the input occupies the leading slice.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(int in_channels, int layers, int growth, int bottleneck_factor = 4);

  Var forward(const Var& x, bool training);
  int in_channels() const { return in_channels_; }
  int out_channels() const { return in_channels_ + static_cast<int>(layers_.size()) * growth_; }
  int layers() const { return static_cast<int>(layers_.size()); }
  void collect(ParamSet& ps, const std::string& prefix, bool head);

 private:
  int in_channels_ = 0;
  int growth_ = 0;
  std::vector<DenseLayer> layers_;
};

/// 1x1 conv (channel compression) + BN + ReLU + 2x2 average pool.
struct Transition {
  ConvBnRelu conv;

  Transition() = default;
  Transition(int cin, int cout) : conv(cin, cout, 1, 1, 0) {}
  Var operator()(const Var& x, bool training) { return ag::avg_pool2(conv(x, training)); }
  int out_channels() const { return conv.conv.weight->value.dim(0); }
};

struct InitConfig {
  double head_std = 0.01;
  std::uint64_t seed = 0;
};

/// Heads: weights ~ N(0, head_std^2). Trunk: He-normal. Biases and BN shifts
/// are zeroed, BN scales set to one, BN running statistics reset.
void init_weights(const ParamSet& ps, const InitConfig& config);

}  // namespace dsgd::nn
