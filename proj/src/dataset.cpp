#include "dsgd/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <nlohmann/json.hpp>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>
#include <sstream>

#include "dsgd/error.hpp"

namespace dsgd {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_coord(const std::string& tok, const fs::path& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    // std::stod rejects some NaN spellings; accept them explicitly.
    std::string lower = tok;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (lower == "nan" || lower == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError(path.string() + ":" + std::to_string(line) + ": bad coordinate '" + tok + "'");
  }
}

Image from_mats(const cv::Mat& color_bgr, const cv::Mat& depth8) {
  Image im(color_bgr.cols, color_bgr.rows);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const auto& px = color_bgr.at<cv::Vec3b>(y, x);
      im.at(0, y, x) = px[2];
      im.at(1, y, x) = px[1];
      im.at(2, y, x) = depth8.at<std::uint8_t>(y, x);
    }
  return im;
}

// Fills zero-valued (missing) pixels from their nearest valid neighbour.
cv::Mat inpaint_nearest(const cv::Mat& depth) {
  cv::Mat valid = depth != 0;
  if (cv::countNonZero(valid) == 0 || cv::countNonZero(valid) == depth.rows * depth.cols)
    return depth.clone();
  cv::Mat invalid = depth == 0;
  cv::Mat dist, labels;
  cv::distanceTransform(invalid, dist, labels, cv::DIST_L2, cv::DIST_MASK_PRECISE,
                        cv::DIST_LABEL_PIXEL);
  // Map each label to the location of the zero (valid) pixel that owns it.
  std::vector<cv::Point> owner(static_cast<std::size_t>(depth.rows) * depth.cols + 1);
  for (int y = 0; y < depth.rows; ++y)
    for (int x = 0; x < depth.cols; ++x)
      if (!invalid.at<std::uint8_t>(y, x)) owner[labels.at<int>(y, x)] = {x, y};
  cv::Mat out = depth.clone();
  for (int y = 0; y < depth.rows; ++y)
    for (int x = 0; x < depth.cols; ++x)
      if (invalid.at<std::uint8_t>(y, x)) {
        const cv::Point p = owner[labels.at<int>(y, x)];
        switch (depth.depth()) {
          case CV_8U: out.at<std::uint8_t>(y, x) = depth.at<std::uint8_t>(p); break;
          case CV_16U: out.at<std::uint16_t>(y, x) = depth.at<std::uint16_t>(p); break;
          default: out.at<float>(y, x) = depth.at<float>(p); break;
        }
      }
  return out;
}

fs::path find_depth(const fs::path& image_path) {
  std::string stem = image_path.stem().string();
  if (!stem.empty() && stem.back() == 'r') stem.back() = 'd';
  for (const char* ext : {".png", ".tiff", ".tif"}) {
    fs::path p = image_path.parent_path() / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw ParseError("depth image not found next to " + image_path.string());
}

}  // namespace

std::size_t PixelTargets::support_size() const {
  return static_cast<std::size_t>(std::count_if(xy.begin(), xy.end(), [](float v) { return v > 0; }));
}

std::vector<GraspRect> parse_cornell_annotation(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open annotation file " + path.string());
  std::vector<std::pair<Point, int>> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::istringstream ss(t);
    std::string xs, ys, extra;
    if (!(ss >> xs >> ys) || (ss >> extra))
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y'");
    pts.push_back({{parse_coord(xs, path, lineno), parse_coord(ys, path, lineno)}, lineno});
  }
  if (pts.size() % 4 != 0)
    throw ParseError(path.string() + ":" + std::to_string(pts.empty() ? lineno : pts.back().second) +
                     ": " + std::to_string(pts.size()) + " coordinate lines is not a multiple of 4");
  std::vector<GraspRect> rects;
  for (std::size_t i = 0; i < pts.size(); i += 4) {
    CornerQuad q{pts[i].first, pts[i + 1].first, pts[i + 2].first, pts[i + 3].first};
    const bool has_nan = std::any_of(q.begin(), q.end(), [](const Point& p) {
      return std::isnan(p.x) || std::isnan(p.y);
    });
    if (has_nan) {
      spdlog::warn("{}:{}: skipping grasp quad with NaN coordinates", path.string(), pts[i].second);
      continue;
    }
    try {
      rects.push_back(from_corners(q));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(pts[i].second) + ": " + e.what());
    }
  }
  return rects;
}

void write_cornell_annotation(const fs::path& path, std::span<const GraspRect> rects) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[64];
  for (const auto& r : rects)
    for (const auto& p : to_corners(r)) {
      std::snprintf(buf, sizeof buf, "%.6f %.6f\n", p.x, p.y);
      out << buf;
    }
}

Sample load_cornell_sample(const fs::path& image_path, const fs::path& annotation_path) {
  cv::Mat color = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (color.empty()) throw ParseError("cannot read image " + image_path.string());
  const fs::path depth_path = find_depth(image_path);
  cv::Mat depth = cv::imread(depth_path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (depth.empty()) throw ParseError("cannot read depth image " + depth_path.string());
  if (depth.size() != color.size())
    throw ParseError("depth and color sizes differ for " + image_path.string());
  depth = inpaint_nearest(depth);
  cv::Mat depth8;
  if (depth.depth() == CV_8U) {
    depth8 = depth;
  } else {
    double lo = 0, hi = 0;
    cv::minMaxLoc(depth, &lo, &hi);
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    depth.convertTo(depth8, CV_8U, scale, -lo * scale);
  }
  Sample s;
  s.id = image_path.stem().string();
  if (!s.id.empty() && s.id.back() == 'r') s.id.pop_back();
  s.image = from_mats(color, depth8);
  s.grasps = parse_cornell_annotation(annotation_path);
  s.object_id = s.id;
  return s;
}

void write_corpus(const fs::path& dir, std::span<const Sample> samples) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    cv::Mat color(s.image.height, s.image.width, CV_8UC3);
    cv::Mat depth(s.image.height, s.image.width, CV_8UC1);
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x) {
        color.at<cv::Vec3b>(y, x) = {0, s.image.at(1, y, x), s.image.at(0, y, x)};
        depth.at<std::uint8_t>(y, x) = s.image.at(2, y, x);
      }
    const std::string image = s.id + "r.png";
    const std::string annotation = s.id + "cpos.txt";
    if (!cv::imwrite((dir / image).string(), color) ||
        !cv::imwrite((dir / (s.id + "d.png")).string(), depth))
      throw Error("cannot write images for " + s.id);
    write_cornell_annotation(dir / annotation, s.grasps);
    manifest.push_back(
        {{"id", s.id}, {"object_id", s.object_id}, {"image", image}, {"annotation", annotation}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

std::vector<Sample> load_corpus(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad manifest in " + dir.string() + ": " + e.what());
  }
  std::vector<Sample> out;
  for (const auto& rec : manifest) {
    Sample s = load_cornell_sample(dir / rec.at("image").get<std::string>(),
                                   dir / rec.at("annotation").get<std::string>());
    s.id = rec.at("id").get<std::string>();
    s.object_id = rec.at("object_id").get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

Split object_wise_split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed) {
  std::set<std::string> id_set;
  for (const auto& s : samples) {
    if (s.object_id.empty()) throw std::invalid_argument("sample " + s.id + " has no object_id");
    id_set.insert(s.object_id);
  }
  if (id_set.size() < 2) throw std::invalid_argument("object-wise split needs at least two objects");
  std::vector<std::string> ids(id_set.begin(), id_set.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int n = static_cast<int>(ids.size());
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * n)), 1, n - 1);
  const std::set<std::string> train_ids(ids.begin(), ids.begin() + n_train);
  Split split;
  for (const auto& s : samples) (train_ids.count(s.object_id) ? split.train : split.test).push_back(s);
  return split;
}

GraspRect rotate_rect(const GraspRect& r, double angle, double cx, double cy) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = r.x - cx, dy = r.y - cy;
  return GraspRect::make(cx + c * dx - s * dy, cy + s * dx + c * dy, r.w, r.h, r.theta + angle, r.rho);
}

Sample augment_rotation(const Sample& sample, double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("rotation angle must be finite");
  Sample out = sample;
  if (angle == 0) return out;
  const Image& im = sample.image;
  const double cx = (im.width - 1) / 2.0, cy = (im.height - 1) / 2.0;
  // Inverse map: destination pixel p' samples source c + R(-angle) (p' - c).
  const double c = std::cos(angle), s = std::sin(angle);
  cv::Mat m = (cv::Mat_<double>(2, 3) << c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy);
  for (int ch = 0; ch < im.channels; ++ch) {
    cv::Mat src(im.height, im.width, CV_8UC1,
                const_cast<std::uint8_t*>(im.data.data()) + static_cast<std::size_t>(ch) * im.width * im.height);
    cv::Mat dst(im.height, im.width, CV_8UC1,
                out.image.data.data() + static_cast<std::size_t>(ch) * im.width * im.height);
    cv::warpAffine(src, dst, m, src.size(), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP,
                   cv::BORDER_REPLICATE);
  }
  for (auto& g : out.grasps) g = rotate_rect(g, angle, cx, cy);
  return out;
}

PixelTargets encode_pixel_targets(const Sample& sample) {
  const int w = sample.image.width, h = sample.image.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  PixelTargets t{w, h, std::vector<float>(n, 0), std::vector<float>(n, 0), std::vector<float>(n, 0),
                 std::vector<int>(n, kIgnoreLabel)};
  for (const auto& g : sample.grasps) {
    GraspRect strip = g;
    strip.h = g.h * kSupportFraction;
    const Mask m = rasterize_rect(strip, w, h);
    const int bin = angle_to_bin(g.theta).index;
    for (std::size_t i = 0; i < n; ++i)
      if (m.data[i]) {
        t.xy[i] = 1;
        t.w[i] = static_cast<float>(g.w);
        t.h[i] = static_cast<float>(g.h);
        t.theta[i] = bin;
      }
  }
  return t;
}

std::vector<float> region_mask(const GraspRect& rect, const Box& region) {
  std::vector<float> m(kMaskSize * kMaskSize, 0);
  const double cw = region.w / kMaskSize, ch = region.h / kMaskSize;
  for (int i = 0; i < kMaskSize; ++i)
    for (int j = 0; j < kMaskSize; ++j) {
      int inside = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx)
          inside += rect_contains(rect, region.x0() + (j + (sx + 0.5) / 2) * cw,
                                  region.y0() + (i + (sy + 0.5) / 2) * ch);
      m[i * kMaskSize + j] = inside >= 2 ? 1.0f : 0.0f;
    }
  return m;
}

RegionTargets encode_region_targets(const Sample& sample, std::span<const Box> proposals) {
  RegionTargets t;
  std::vector<Box> gt_boxes;
  for (const auto& g : sample.grasps) gt_boxes.push_back(bounding_box(g));
  for (const Box& p : proposals) {
    double best = 0;
    int best_k = -1;
    for (std::size_t k = 0; k < gt_boxes.size(); ++k) {
      const double v = iou(p, gt_boxes[k]);
      if (v > best) {
        best = v;
        best_k = static_cast<int>(k);
      }
    }
    int label = kIgnoreLabel;
    if (best >= kPositiveIou) label = 1;
    else if (best < kNegativeIou) label = 0;
    t.boxes.push_back(p);
    t.labels.push_back(label);
    if (label == 1) t.targets.emplace_back(sample.grasps[best_k]);
    else t.targets.emplace_back(std::nullopt);
    if (label >= 0 && best_k >= 0) t.masks.push_back(region_mask(sample.grasps[best_k], p));
    else if (label >= 0) t.masks.emplace_back(kMaskSize * kMaskSize, 0.0f);
    else t.masks.emplace_back();
  }
  return t;
}

std::vector<GenExample> sample_gen_examples(const Sample& sample, int n_pos, int n_neg,
                                            std::mt19937_64& rng) {
  if (sample.grasps.empty()) throw std::invalid_argument("sample_gen_examples needs a ground truth");
  std::vector<GenExample> out;
  const int n_gt = static_cast<int>(sample.grasps.size());
  std::vector<int> order(n_gt);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n_pos; ++i) {
    const GraspRect& g = sample.grasps[order[i % n_gt]];
    out.push_back({make_grasp_image(sample.image, g), 1, g});
  }
  std::uniform_int_distribution<int> pick(0, n_gt - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double w = sample.image.width, h = sample.image.height;
  for (int i = 0; i < n_neg; ++i) {
    bool found = false;
    for (int attempt = 0; attempt < kNegativeAttempts && !found; ++attempt) {
      const GraspRect& g = sample.grasps[pick(rng)];
      const double reach = 0.6 * std::max(g.w, g.h);
      const double x = std::clamp(g.x + unit(rng) * reach, 0.0, w - 1);
      const double y = std::clamp(g.y + unit(rng) * reach, 0.0, h - 1);
      const double sw = std::exp(0.5 * unit(rng)), sh = std::exp(0.5 * unit(rng));
      const double theta = g.theta + unit(rng) * kPi / 2;
      const GraspRect cand = GraspRect::make(x, y, g.w * sw, g.h * sh, theta, 1.0);
      if (!rectangle_match(cand, sample.grasps)) {
        out.push_back({make_grasp_image(sample.image, cand), 0, cand});
        found = true;
      }
    }
    if (!found)
      spdlog::warn("sample {}: no invalid grasp found in {} attempts, skipping negative", sample.id,
                   kNegativeAttempts);
  }
  return out;
}

// ---- synthetic shapes ----------------------------------------------------------

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Bar: return "bar";
    case ShapeFamily::Disc: return "disc";
    case ShapeFamily::LShape: return "lshape";
    case ShapeFamily::Ring: return "ring";
  }
  return "unknown";
}

namespace {

struct Local {
  double a, b;
};

Local to_local(const ShapeSpec& s, double x, double y, double ox, double oy) {
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  const double dx = x - ox, dy = y - oy;
  return {dx * c + dy * sn, -dx * sn + dy * c};
}

// Corner of an L-shape: the bounding-box center sits at (cx, cy).
Point lshape_origin(const ShapeSpec& s) {
  const double ac = (s.length - s.thickness) / 2, bc = (s.arm - s.thickness) / 2;
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  return {s.cx - ac * c + bc * sn, s.cy - ac * sn - bc * c};
}

Point from_local(const ShapeSpec& s, Point origin, double a, double b) {
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  return {origin.x + a * c - b * sn, origin.y + a * sn + b * c};
}

double bounding_radius(const ShapeSpec& s) {
  double r = 0;
  for (const auto& g : shape_grasps(s))
    for (const auto& p : to_corners(g)) r = std::max(r, std::hypot(p.x - s.cx, p.y - s.cy));
  switch (s.family) {
    case ShapeFamily::Bar: r = std::max(r, std::hypot(s.length, s.thickness) / 2); break;
    case ShapeFamily::Disc:
    case ShapeFamily::Ring: r = std::max(r, s.radius); break;
    case ShapeFamily::LShape: r = std::max(r, std::hypot(s.length, s.arm) / 2); break;
  }
  return r;
}

int bucket(double v, double lo, double hi, int n) {
  return std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * n)), 0, n - 1);
}

}  // namespace

bool shape_contains(const ShapeSpec& s, double x, double y) {
  switch (s.family) {
    case ShapeFamily::Bar: {
      const Local l = to_local(s, x, y, s.cx, s.cy);
      return std::abs(l.a) <= s.length / 2 && std::abs(l.b) <= s.thickness / 2;
    }
    case ShapeFamily::Disc:
      return std::hypot(x - s.cx, y - s.cy) <= s.radius;
    case ShapeFamily::Ring: {
      const double d = std::hypot(x - s.cx, y - s.cy);
      return d <= s.radius && d >= s.radius - s.thickness;
    }
    case ShapeFamily::LShape: {
      const Point o = lshape_origin(s);
      const Local l = to_local(s, x, y, o.x, o.y);
      const double t2 = s.thickness / 2;
      return (l.a >= -t2 && l.a <= s.length - t2 && std::abs(l.b) <= t2) ||
             (std::abs(l.a) <= t2 && l.b >= -t2 && l.b <= s.arm - t2);
    }
  }
  return false;
}

std::vector<GraspRect> shape_grasps(const ShapeSpec& s) {
  std::vector<GraspRect> g;
  switch (s.family) {
    case ShapeFamily::Bar: {
      // Plates flank the short axis; three positions along the bar.
      const double c = std::cos(s.angle), sn = std::sin(s.angle);
      for (double off : {-0.2, 0.0, 0.2})
        g.push_back(GraspRect::make(s.cx + off * s.length * c, s.cy + off * s.length * sn,
                                    s.thickness + 4, 0.6 * s.length, s.angle + kPi / 2));
      break;
    }
    case ShapeFamily::Disc:
      for (int k = 0; k < 8; ++k)
        g.push_back(GraspRect::make(s.cx, s.cy, 2 * s.radius + 4, s.radius, k * kPi / 8));
      break;
    case ShapeFamily::Ring: {
      const double mid = s.radius - s.thickness / 2;
      for (int k = 0; k < 8; ++k) {
        const double a = 2 * kPi * k / 8;
        g.push_back(GraspRect::make(s.cx + mid * std::cos(a), s.cy + mid * std::sin(a),
                                    s.thickness + 4, 1.5 * s.thickness, a));
      }
      break;
    }
    case ShapeFamily::LShape: {
      const Point o = lshape_origin(s);
      const double t = s.thickness;
      const double free_long = s.length - t, free_short = s.arm - t;
      for (double off : {-0.2, 0.0, 0.2}) {
        const Point p = from_local(s, o, t / 2 + free_long / 2 + off * free_long, 0);
        g.push_back(GraspRect::make(p.x, p.y, t + 4, 0.5 * free_long, s.angle + kPi / 2));
      }
      const Point p = from_local(s, o, 0, t / 2 + free_short / 2);
      g.push_back(GraspRect::make(p.x, p.y, t + 4, 0.5 * free_short, s.angle));
      break;
    }
  }
  return g;
}

std::string shape_object_id(const ShapeSpec& s) {
  return family_name(s.family) + "-" + std::to_string(s.size_bucket);
}

ShapeSpec random_shape(std::mt19937_64& rng, ShapeFamily family, int width, int height, double cx,
                       double cy) {
  const double k = std::min(width, height) / 64.0;
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  ShapeSpec s;
  s.family = family;
  s.cx = cx;
  s.cy = cy;
  s.angle = uni(0, kPi);
  switch (family) {
    case ShapeFamily::Bar: {
      const double l = uni(26, 40), t = uni(8, 12);
      s.length = l * k;
      s.thickness = t * k;
      s.size_bucket = bucket(l, 26, 40, 4) * 2 + (t >= 10);
      break;
    }
    case ShapeFamily::Disc: {
      const double r = uni(9, 13);
      s.radius = r * k;
      s.size_bucket = bucket(r, 9, 13, 8);
      break;
    }
    case ShapeFamily::LShape: {
      const double l = uni(28, 40), a = uni(20, 28), t = uni(8, 11);
      s.length = l * k;
      s.arm = a * k;
      s.thickness = t * k;
      s.size_bucket = bucket(l, 28, 40, 4) * 2 + (t >= 9.5);
      break;
    }
    case ShapeFamily::Ring: {
      const double r = uni(15, 19), t = uni(5, 7);
      s.radius = r * k;
      s.thickness = t * k;
      s.size_bucket = bucket(r, 15, 19, 4) * 2 + (t >= 6);
      break;
    }
  }
  return s;
}

Sample render_scene(std::span<const ShapeSpec> shapes, int width, int height, std::mt19937_64& rng,
                    std::string id) {
  if (width < 64 || height < 64) throw std::invalid_argument("synthetic canvas must be at least 64x64");
  std::uniform_int_distribution<int> bg(30, 90), obj_r(140, 240), obj_g(100, 220), obj_d(170, 220),
      noise(-5, 5);
  const int bg_r = bg(rng), bg_g = bg(rng);
  struct Paint {
    int r, g, d;
  };
  std::vector<Paint> paints;
  for (std::size_t i = 0; i < shapes.size(); ++i) paints.push_back({obj_r(rng), obj_g(rng), obj_d(rng)});
  Sample s;
  s.id = std::move(id);
  s.image = Image(width, height);
  auto clamp8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double r = bg_r, g = bg_g, d = 50 + 10.0 * y / height;
      for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (!shape_contains(shapes[i], x, y)) continue;
        const double shade = 0.85 + 0.3 * (static_cast<double>(x) / width - 0.5);
        r = paints[i].r * shade;
        g = paints[i].g * shade;
        d = paints[i].d;
      }
      s.image.at(0, y, x) = clamp8(r + noise(rng));
      s.image.at(1, y, x) = clamp8(g + noise(rng));
      s.image.at(2, y, x) = clamp8(d + noise(rng));
    }
  for (const auto& sh : shapes) {
    const auto g = shape_grasps(sh);
    s.grasps.insert(s.grasps.end(), g.begin(), g.end());
  }
  if (!shapes.empty()) s.object_id = shape_object_id(shapes.front());
  return s;
}

namespace {

ShapeFamily draw_family(std::mt19937_64& rng, const SynthOptions& o) {
  std::discrete_distribution<int> d(o.family_weights.begin(), o.family_weights.end());
  return static_cast<ShapeFamily>(d(rng));
}

ShapeSpec place_single(std::mt19937_64& rng, int width, int height, ShapeFamily family,
                       const SynthOptions& o) {
  std::uniform_real_distribution<double> off(-o.max_offset, o.max_offset);
  const double cx0 = (width - 1) / 2.0 + off(rng) * width;
  const double cy0 = (height - 1) / 2.0 + off(rng) * height;
  ShapeSpec s = random_shape(rng, family, width, height, cx0, cy0);
  const double r = bounding_radius(s);
  s.cx = std::clamp(s.cx, std::min(r, (width - 1) / 2.0), std::max(width - 1 - r, (width - 1) / 2.0));
  s.cy = std::clamp(s.cy, std::min(r, (height - 1) / 2.0), std::max(height - 1 - r, (height - 1) / 2.0));
  return s;
}

}  // namespace

Sample make_family_scene(std::mt19937_64& rng, int width, int height, ShapeFamily family,
                         const SynthOptions& options) {
  if (width < 64 || height < 64) throw std::invalid_argument("synthetic canvas must be at least 64x64");
  const ShapeSpec s = place_single(rng, width, height, family, options);
  return render_scene(std::span<const ShapeSpec>(&s, 1), width, height, rng);
}

Sample make_synthetic_scene(std::mt19937_64& rng, int width, int height, int n_objects,
                            const SynthOptions& options) {
  if (width < 64 || height < 64) throw std::invalid_argument("synthetic canvas must be at least 64x64");
  if (n_objects < 1) throw std::invalid_argument("a scene needs at least one object");
  if (n_objects == 1) return make_family_scene(rng, width, height, draw_family(rng, options), options);
  std::vector<ShapeSpec> shapes;
  std::uniform_real_distribution<double> ux(0, width - 1), uy(0, height - 1);
  for (int i = 0; i < n_objects; ++i) {
    const ShapeFamily fam = draw_family(rng, options);
    for (int attempt = 0; attempt < 200; ++attempt) {
      ShapeSpec s = random_shape(rng, fam, width, height, ux(rng), uy(rng));
      const double r = bounding_radius(s);
      if (s.cx < r || s.cy < r || s.cx > width - 1 - r || s.cy > height - 1 - r) continue;
      const bool overlaps = std::any_of(shapes.begin(), shapes.end(), [&](const ShapeSpec& o) {
        return std::hypot(o.cx - s.cx, o.cy - s.cy) < r + bounding_radius(o);
      });
      if (overlaps) continue;
      shapes.push_back(s);
      break;
    }
  }
  if (shapes.empty()) shapes.push_back(place_single(rng, width, height, draw_family(rng, options), options));
  return render_scene(shapes, width, height, rng);
}

Split make_objectwise_synthetic(std::mt19937_64& rng, int width, int height, int n_train, int n_test,
                                int held_out, const SynthOptions& options, const std::string& prefix) {
  if (n_train < 0 || n_test < 0) throw std::invalid_argument("scene counts must be non-negative");
  if (held_out < 1 || held_out >= kSizeBuckets)
    throw std::invalid_argument("held_out must lie in [1, " + std::to_string(kSizeBuckets - 1) + "]");
  std::array<std::vector<int>, kShapeFamilies> test_buckets;
  for (auto& b : test_buckets) {
    std::vector<int> all(kSizeBuckets);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    b.assign(all.begin(), all.begin() + held_out);
  }
  Split split;
  while (static_cast<int>(split.train.size()) < n_train || static_cast<int>(split.test.size()) < n_test) {
    const ShapeFamily fam = draw_family(rng, options);
    const ShapeSpec s = place_single(rng, width, height, fam, options);
    const auto& tb = test_buckets[static_cast<int>(fam)];
    const bool is_test = std::find(tb.begin(), tb.end(), s.size_bucket) != tb.end();
    auto& side = is_test ? split.test : split.train;
    if (static_cast<int>(side.size()) >= (is_test ? n_test : n_train)) continue;
    side.push_back(render_scene(std::span<const ShapeSpec>(&s, 1), width, height, rng));
  }
  int k = 0;
  for (auto* side : {&split.train, &split.test})
    for (auto& s : *side) s.id = fmt::format("{}{:05d}", prefix, k++);
  return split;
}

}  // namespace dsgd
