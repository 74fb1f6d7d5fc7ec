#include "dsgd/geometry.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <stdexcept>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Point> counter_clockwise(const CornerQuad& q) {
  std::vector<Point> p(q.begin(), q.end());
  if (polygon_area(p) < 0) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("non-finite angle");
  double t = std::fmod(theta, kPi);
  if (t < 0) t += kPi;
  if (t >= kPi) t = 0;
  return t;
}

double angle_distance(double a, double b) {
  const double d = std::abs(normalize_angle(a) - normalize_angle(b));
  return std::min(d, kPi - d);
}

GraspRect GraspRect::make(double x, double y, double w, double h, double theta, double rho) {
  if (!(w > 0) || !(h > 0)) throw std::invalid_argument("grasp rectangle needs w > 0 and h > 0");
  if (!(rho >= 0 && rho <= 1)) throw std::invalid_argument("grasp confidence outside [0, 1]");
  if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("non-finite center");
  return GraspRect{x, y, w, h, normalize_angle(theta), rho};
}

CornerQuad to_corners(const GraspRect& r) {
  const double c = std::cos(r.theta), s = std::sin(r.theta);
  auto corner = [&](double u, double v) { return Point{r.x + u * c - v * s, r.y + u * s + v * c}; };
  return {corner(-r.w / 2, -r.h / 2), corner(r.w / 2, -r.h / 2), corner(r.w / 2, r.h / 2),
          corner(-r.w / 2, r.h / 2)};
}

GraspRect from_corners(const CornerQuad& q) {
  for (const auto& p : q)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ParseError("non-finite quad vertex");
  const std::vector<Point> poly(q.begin(), q.end());
  if (std::abs(polygon_area(poly)) < 1e-9) throw ParseError("degenerate grasp quad (zero area)");
  const double w = std::hypot(q[1].x - q[0].x, q[1].y - q[0].y);
  const double h = std::hypot(q[2].x - q[1].x, q[2].y - q[1].y);
  const double theta = std::atan2(q[1].y - q[0].y, q[1].x - q[0].x);
  const double cx = (q[0].x + q[1].x + q[2].x + q[3].x) / 4;
  const double cy = (q[0].y + q[1].y + q[2].y + q[3].y) / 4;
  return GraspRect::make(cx, cy, w, h, theta);
}

AngleBin angle_to_bin(double theta) {
  const int b = static_cast<int>(std::floor(normalize_angle(theta) / kBinWidth));
  return AngleBin{std::clamp(b, 0, kAngleBins - 1)};
}

double bin_to_angle(AngleBin bin) {
  if (bin.index < 0 || bin.index >= kAngleBins) throw std::out_of_range("angle bin out of range");
  return (bin.index + 0.5) * kBinWidth;
}

Box bounding_box(const GraspRect& r) {
  const auto q = to_corners(r);
  double x0 = q[0].x, x1 = q[0].x, y0 = q[0].y, y1 = q[0].y;
  for (const auto& p : q) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return Box{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double polygon_area(std::span<const Point> poly) {
  double s = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return s / 2;
}

// Sutherland-Hodgman; `clip` must be counter-clockwise.
std::vector<Point> clip_convex(std::span<const Point> subject, std::span<const Point> clip) {
  std::vector<Point> out(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % clip.size()];
    std::vector<Point> in;
    in.swap(out);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point p = in[i];
      const Point q = in[(i + 1) % in.size()];
      const double dp = cross(a, b, p), dq = cross(a, b, q);
      if (dp >= 0) out.push_back(p);
      if ((dp >= 0) != (dq >= 0)) {
        const double t = dp / (dp - dq);
        out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
  }
  return out;
}

double intersection_area(const GraspRect& a, const GraspRect& b) {
  const auto pa = counter_clockwise(to_corners(a));
  const auto pb = counter_clockwise(to_corners(b));
  const auto inter = clip_convex(pa, pb);
  return inter.size() < 3 ? 0.0 : std::abs(polygon_area(inter));
}

double jaccard(const GraspRect& a_in, const GraspRect& b_in) {
  // Fixed argument order so the floating-point result is exactly symmetric.
  const auto key = [](const GraspRect& r) { return std::tie(r.x, r.y, r.w, r.h, r.theta); };
  const bool swap = key(b_in) < key(a_in);
  const GraspRect& a = swap ? b_in : a_in;
  const GraspRect& b = swap ? a_in : b_in;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool rectangle_match(const GraspRect& pred, std::span<const GraspRect> gts) {
  if (gts.empty()) throw std::invalid_argument("rectangle_match needs at least one ground truth");
  for (const auto& gt : gts) {
    if (angle_distance(pred.theta, gt.theta) < kMatchAngle && jaccard(pred, gt) > kMatchJaccard)
      return true;
  }
  return false;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

bool rect_contains(const GraspRect& r, double px, double py) {
  const double c = std::cos(r.theta), s = std::sin(r.theta);
  const double dx = px - r.x, dy = py - r.y;
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return u >= -r.w / 2 && u < r.w / 2 && v >= -r.h / 2 && v < r.h / 2;
}

Mask rasterize_rect(const GraspRect& rect, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("canvas dimensions must be positive");
  Mask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const Box bb = bounding_box(rect);
  const int x0 = std::max(0, static_cast<int>(std::floor(bb.x0())));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(bb.x1())));
  const int y0 = std::max(0, static_cast<int>(std::floor(bb.y0())));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(bb.y1())));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (rect_contains(rect, x, y)) m.data[static_cast<std::size_t>(y) * width + x] = 1;
  return m;
}

Image make_grasp_image(const Image& image, const GraspRect& rect) {
  if (image.channels != 3) throw std::invalid_argument("grasp images need 3 channels");
  Image out = image;
  const Mask m = rasterize_rect(rect, image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) out.at(2, y, x) = m.at(x, y) ? 255 : 0;
  return out;
}

}  // namespace dsgd
