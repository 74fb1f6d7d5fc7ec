#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace dsgd {

inline constexpr int kAngleBins = 50;
inline constexpr double kBinWidth = std::numbers::pi / kAngleBins;

struct Point {
  double x = 0;
  double y = 0;
};

/// Wraps any finite angle into [0, pi).
double normalize_angle(double theta);
/// Distance between two orientations under the pi-periodic identification.
double angle_distance(double a, double b);

/// Oriented grasp rectangle. `w` is the gripper opening measured along
/// `theta`; `h` is the plate extent perpendicular to it.
struct GraspRect {
  double x = 0;
  double y = 0;
  double w = 1;
  double h = 1;
  double theta = 0;
  double rho = 1;

  /// Normalizes theta and validates w, h > 0 and rho in [0, 1].
  static GraspRect make(double x, double y, double w, double h, double theta, double rho = 1);
  double area() const { return w * h; }
};

/// v0->v1 and v3->v2 run along the opening axis (length w).
using CornerQuad = std::array<Point, 4>;

CornerQuad to_corners(const GraspRect& rect);
/// Throws ParseError for quads with (near) zero area.
GraspRect from_corners(const CornerQuad& quad);

struct AngleBin {
  int index = 0;
  bool operator==(const AngleBin&) const = default;
};
AngleBin angle_to_bin(double theta);
double bin_to_angle(AngleBin bin);

/// Axis-aligned box in center format.
struct Box {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
  double x0() const { return x - w / 2; }
  double y0() const { return y - h / 2; }
  double x1() const { return x + w / 2; }
  double y1() const { return y + h / 2; }
  bool contains(double px, double py) const {
    return px >= x0() && px <= x1() && py >= y0() && py <= y1();
  }
};
Box bounding_box(const GraspRect& rect);
double iou(const Box& a, const Box& b);

double polygon_area(std::span<const Point> poly);
/// Clips a convex polygon against another convex polygon.
std::vector<Point> clip_convex(std::span<const Point> subject, std::span<const Point> clip);

double intersection_area(const GraspRect& a, const GraspRect& b);
double jaccard(const GraspRect& a, const GraspRect& b);

inline constexpr double kMatchAngle = 30.0 * std::numbers::pi / 180.0;
inline constexpr double kMatchJaccard = 0.25;

/// Rectangle metric: some ground truth within 30 degrees and Jaccard > 0.25.
/// Throws std::invalid_argument for an empty ground-truth list.
bool rectangle_match(const GraspRect& pred, std::span<const GraspRect> gts);

/// Single-channel binary mask, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

/// True when point (px, py) falls inside the rectangle; the lower edge of each
/// axis is inclusive and the upper edge exclusive.
bool rect_contains(const GraspRect& rect, double px, double py);

/// Pixel (i, j) has its center at (i, j).
Mask rasterize_rect(const GraspRect& rect, int width, int height);

/// Planar 8-bit image: channel c, row y, column x at data[(c*H + y)*W + x].
/// Channel order is red, green, depth.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c = 3)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0) {}
  std::uint8_t& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::uint8_t at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

/// Replaces the third channel with the rasterized rectangle (0 or 255).
Image make_grasp_image(const Image& image, const GraspRect& rect);

}  // namespace dsgd
