#pragma once

#include <optional>
#include <vector>

#include "dsgd/geometry.hpp"

namespace dsgd {

inline constexpr int kIgnoreLabel = -1;
inline constexpr int kMaskSize = 14;

/// Per-pixel supervision. Maps are row-major width x height; `theta` holds an
/// angle-bin index or kIgnoreLabel outside the grasp support.
struct PixelTargets {
  int width = 0;
  int height = 0;
  std::vector<float> xy;
  std::vector<float> w;
  std::vector<float> h;
  std::vector<int> theta;

  bool in_support(std::size_t i) const { return xy[i] > 0; }
  std::size_t support_size() const;
};

/// Labels for a set of non-oriented boxes: 1 graspable, 0 not, kIgnoreLabel
/// for the band excluded from the loss. Positives carry their matched ground
/// truth; every labeled box carries a kMaskSize x kMaskSize mask of the
/// ground-truth rectangles it covers.
struct RegionTargets {
  std::vector<Box> boxes;
  std::vector<int> labels;
  std::vector<std::optional<GraspRect>> targets;
  std::vector<std::vector<float>> masks;
};

}  // namespace dsgd
