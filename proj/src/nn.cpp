#include "dsgd/nn.hpp"

#include <cmath>

#include "dsgd/error.hpp"

namespace dsgd::nn {

Conv2d::Conv2d(int cin, int cout, int k, int s, int p, bool with_bias)
    : weight(ag::parameter(Tensor({cout, cin, k, k}))), stride(s), pad(p) {
  if (with_bias) bias = ag::parameter(Tensor({cout}));
}

void Conv2d::collect(ParamSet& ps, const std::string& prefix, bool head) const {
  ps.add(prefix + ".weight", weight, ParamKind::Weight, head);
  if (bias) ps.add(prefix + ".bias", bias, ParamKind::Bias, head);
}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int s, int p, bool with_bias)
    : weight(ag::parameter(Tensor({cin, cout, k, k}))), stride(s), pad(p) {
  if (with_bias) bias = ag::parameter(Tensor({cout}));
}

void ConvTranspose2d::collect(ParamSet& ps, const std::string& prefix, bool head) const {
  ps.add(prefix + ".weight", weight, ParamKind::Weight, head);
  if (bias) ps.add(prefix + ".bias", bias, ParamKind::Bias, head);
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(ag::parameter(Tensor({channels}, 1))), beta(ag::parameter(Tensor({channels}, 0))) {
  state.running_mean = Tensor({channels}, 0);
  state.running_var = Tensor({channels}, 1);
}

void BatchNorm2d::collect(ParamSet& ps, const std::string& prefix, bool head) {
  ps.add(prefix + ".gamma", gamma, ParamKind::BnScale, head);
  ps.add(prefix + ".beta", beta, ParamKind::BnShift, head);
  ps.add_buffer(prefix + ".running_mean", &state.running_mean);
  ps.add_buffer(prefix + ".running_var", &state.running_var);
}

Linear::Linear(int in, int out)
    : weight(ag::parameter(Tensor({out, in}))), bias(ag::parameter(Tensor({out}))) {}

void Linear::collect(ParamSet& ps, const std::string& prefix, bool head) const {
  ps.add(prefix + ".weight", weight, ParamKind::Weight, head);
  ps.add(prefix + ".bias", bias, ParamKind::Bias, head);
}

DenseBlock::DenseBlock(int in_channels, int layers, int growth, int bottleneck_factor)
    : in_channels_(in_channels), growth_(growth) {
  if (in_channels < 1 || layers < 1 || growth < 1 || bottleneck_factor < 1)
    throw ConfigError("dense block needs positive input width, layer count and growth rate");
  layers_.reserve(layers);
  for (int l = 0; l < layers; ++l)
    layers_.emplace_back(in_channels + l * growth, growth, bottleneck_factor);
}

Var DenseBlock::forward(const Var& x, bool training) {
  if (x->value.dim(1) != in_channels_)
    throw ConfigError("dense block expects " + std::to_string(in_channels_) + " input channels, got " +
                      std::to_string(x->value.dim(1)));
  std::vector<Var> features{x};
  Var current = x;
  for (auto& layer : layers_) {
    features.push_back(layer(current, training));
    current = ag::concat_channels(features);
  }
  return current;
}

void DenseBlock::collect(ParamSet& ps, const std::string& prefix, bool head) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers_[l].bottleneck.collect(ps, p + ".bottleneck", head);
    layers_[l].conv.collect(ps, p + ".conv", head);
  }
}

void init_weights(const ParamSet& ps, const InitConfig& config) {
  std::mt19937_64 rng(config.seed);
  for (const auto& p : ps.params()) {
    Tensor& t = p.var->value;
    switch (p.kind) {
      case ParamKind::Bias:
      case ParamKind::BnShift:
        t.fill(0);
        break;
      case ParamKind::BnScale:
        t.fill(1);
        break;
      case ParamKind::Weight: {
        double std = config.head_std;
        if (!p.head) {
          // fan_in: Cin * k * k for convs, in_features for linears. Transposed
          // conv weights are [Cin, Cout, k, k]; use Cout * k * k there.
          const auto& s = t.shape();
          const double fan_in = static_cast<double>(t.size()) / s[0];
          std = std::sqrt(2.0 / fan_in);
        }
        std::normal_distribution<double> dist(0.0, std);
        for (auto& v : t.vec()) v = static_cast<Scalar>(dist(rng));
        break;
      }
    }
  }
  for (const auto& b : ps.buffers()) {
    const bool is_var = b.name.size() >= 3 && b.name.compare(b.name.size() - 3, 3, "var") == 0;
    b.tensor->fill(is_var ? 1 : 0);
  }
}

}  // namespace dsgd::nn
