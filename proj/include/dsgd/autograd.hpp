#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dsgd/tensor.hpp"

namespace dsgd::ag {

struct Node;
using Var = std::shared_ptr<Node>;

/// A value in the computation graph. Leaves with requires_grad are parameters;
/// interior nodes carry a closure that pushes their gradient to the parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0);
  }
};

/// Scoped switch that stops graph construction (inference, oracles).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

Var constant(Tensor value);
Var parameter(Tensor value);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into leaves.
void backward(const Var& root);

// Convolutions. Weights are [Cout, Cin, k, k] for conv2d and [Cin, Cout, k, k]
// for the transposed variant; bias may be null.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  Scalar momentum = 0.1f;
  Scalar eps = 1e-5f;
};
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
               bool training);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var avg_pool2(const Var& x);
Var global_avg_pool(const Var& x);
Var linear(const Var& x, const Var& w, const Var& b);
Var concat_channels(const std::vector<Var>& xs);
Var add(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);

/// Axis-aligned region in feature-map coordinates (cell centers at integers).
struct RoiBox {
  int batch = 0;
  Scalar x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};
/// Crop-and-resize: one bilinear sample at the center of every output bin.
Var roi_align(const Var& x, std::span<const RoiBox> rois, int out_h, int out_w);
Scalar bilinear_sample(const Tensor& x, int n, int c, Scalar fy, Scalar fx);

/// Scalar node whose value and input gradients are computed eagerly by
/// `fn`. The gradients are scaled by the upstream gradient on the way back.
using EagerLoss =
    std::function<Scalar(std::span<const Tensor* const>, std::span<Tensor* const>)>;
Var eager_loss(const std::vector<Var>& inputs, const EagerLoss& fn);

/// Sum of scalar nodes with fixed weights.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<Scalar>& weights);

}  // namespace dsgd::ag
