#pragma once

#include <array>
#include <random>
#include <span>
#include <vector>

#include "dsgd/backbone.hpp"
#include "dsgd/dataset.hpp"
#include "dsgd/geometry.hpp"
#include "dsgd/losses.hpp"

namespace dsgd {

/// Raw global prediction for one image. `reg` is the regressed box
/// (x / W, y / H, w / W, h / H) after the positive parameterization of w, h.
struct GlobalPrediction {
  std::array<float, 4> reg{};
  std::vector<float> theta_logits;
  std::array<float, 2> rho_logits{};
};

/// Maps raw fc outputs (z0..z3) to (z0, z1, softplus(z2), softplus(z3)).
template <std::floating_point T>
std::array<T, 4> ggpn_box(std::span<const T> z) {
  auto sp = [](T v) { return v > 20 ? v : std::log1p(std::exp(v)); };
  return {z[0], z[1], sp(z[2]), sp(z[3])};
}

/// Target vector for a rectangle on a width x height image.
std::array<double, 4> ggpn_target(const GraspRect& rect, int width, int height);
GraspRect decode_global(std::span<const float> reg, std::span<const float> theta_logits, int width,
                        int height);

/// Regression target for one image: a ground truth closest to the centroid of
/// all ground-truth centers, ties (within one pixel) broken uniformly at random.
const GraspRect& ggpn_training_target(const Sample& sample, std::mt19937_64& rng);

/// Global grasp prediction network: dense block, two coordinate channels,
/// global average pooling, then a 4-way and a 50-way linear head.
class Ggpn {
 public:
  struct Output {
    ag::Var reg;    // N x 4 raw
    ag::Var theta;  // N x 50
  };

  Ggpn() = default;
  explicit Ggpn(const BackboneConfig& config);
  Output forward(const ag::Var& features, bool training);
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  nn::DenseBlock block_;
  nn::Linear fc_reg_, fc_theta_;
};

/// Grasp evaluation network: an independent trunk over grasp images, a dense
/// block, average pooling and a 2-way linear head.
class Gen {
 public:
  Gen() = default;
  explicit Gen(const BackboneConfig& config);
  Gen(Gen&&) = default;
  Gen& operator=(Gen&&) = default;

  ag::Var forward(const ag::Var& grasp_images, bool training);  // N x 2
  void collect(nn::ParamSet& ps, const std::string& prefix);

 private:
  Backbone trunk_;
  nn::DenseBlock block_;
  nn::Linear fc_;
};

/// Batch-mean GGPN objective over raw head outputs.
ag::Var ggpn_batch_loss(const Ggpn::Output& out, std::span<const std::array<double, 4>> targets,
                        std::span<const int> bins, double lambda1);
/// Batch-mean GEN objective.
ag::Var gen_batch_loss(const ag::Var& rho_logits, std::span<const int> labels);

/// Softmax probability of the "valid" class.
double gen_confidence(std::span<const float> rho_logits);

}  // namespace dsgd
