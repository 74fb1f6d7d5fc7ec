#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsgd/geometry.hpp"
#include "dsgd/targets.hpp"

namespace dsgd {

/// One RGB-D view: red, green and depth-as-blue channels plus its positive
/// grasp rectangles. `object_id` groups every view of one object instance.
struct Sample {
  std::string id;
  Image image;
  std::vector<GraspRect> grasps;
  std::string object_id;
};

// ---- Cornell-format I/O ---------------------------------------------------

/// Parses a positive-rectangle file: four "x y" lines per rectangle, blank
/// lines ignored. Quads containing NaN are skipped with a warning.
std::vector<GraspRect> parse_cornell_annotation(const std::filesystem::path& path);
void write_cornell_annotation(const std::filesystem::path& path, std::span<const GraspRect> rects);

/// Loads `pcdXXXXr.png` plus its sibling depth image `pcdXXXXd.*`. Missing
/// depth (zeros) is filled from the nearest valid pixel; 16-bit or float depth
/// is min-max normalized to 0..255, 8-bit depth is taken as already normalized.
Sample load_cornell_sample(const std::filesystem::path& image_path,
                           const std::filesystem::path& annotation_path);

/// Writes samples in Cornell layout plus `manifest.json`.
void write_corpus(const std::filesystem::path& dir, std::span<const Sample> samples);
/// Reads a directory written by write_corpus (or any Cornell directory with a
/// manifest).
std::vector<Sample> load_corpus(const std::filesystem::path& dir);

// ---- Splitting and augmentation ---------------------------------------------

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Partitions by object_id so that no object appears on both sides.
/// Throws std::invalid_argument with fewer than two distinct objects.
Split object_wise_split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed);

/// Rotates the image about its center and moves every grasp with it.
Sample augment_rotation(const Sample& sample, double angle);
GraspRect rotate_rect(const GraspRect& rect, double angle, double cx, double cy);

// ---- Target encoding ----------------------------------------------------------

/// Fraction of a rectangle's plate extent used as per-pixel support.
inline constexpr double kSupportFraction = 1.0 / 3.0;

PixelTargets encode_pixel_targets(const Sample& sample);

inline constexpr double kPositiveIou = 0.5;
inline constexpr double kNegativeIou = 0.3;

/// Labels proposals against the ground-truth bounding boxes and builds the
/// matched rectangle and 14x14 mask for each labeled proposal.
RegionTargets encode_region_targets(const Sample& sample, std::span<const Box> proposals);
/// kMaskSize^2 mask of `rect` sampled over `region` (2x2 samples per cell,
/// cell set when at least half fall inside).
std::vector<float> region_mask(const GraspRect& rect, const Box& region);

struct GenExample {
  Image image;
  int label = 0;
  GraspRect rect;
};

inline constexpr int kNegativeAttempts = 50;

/// Positives render ground-truth rectangles; negatives perturb a ground truth
/// until it fails the rectangle metric against every ground truth.
std::vector<GenExample> sample_gen_examples(const Sample& sample, int n_pos, int n_neg,
                                            std::mt19937_64& rng);

// ---- Synthetic corpus ----------------------------------------------------------

enum class ShapeFamily { Bar = 0, Disc = 1, LShape = 2, Ring = 3 };
inline constexpr int kShapeFamilies = 4;
std::string family_name(ShapeFamily f);

/// Geometry of one synthetic object, in pixels. Bars and L-shapes use
/// `length`, `thickness` and `angle` (L-shapes also `arm`); discs use
/// `radius`; rings use `radius` (outer) and `thickness` (rim).
struct ShapeSpec {
  ShapeFamily family = ShapeFamily::Bar;
  double cx = 0, cy = 0;
  double angle = 0;
  double length = 0, thickness = 0, radius = 0, arm = 0;
  /// Size bucket relative to the family's parameter ranges.
  int size_bucket = 0;
};

bool shape_contains(const ShapeSpec& s, double x, double y);
std::vector<GraspRect> shape_grasps(const ShapeSpec& s);
std::string shape_object_id(const ShapeSpec& s);
/// Draws family-specific dimensions scaled to the canvas, centered at (cx, cy).
ShapeSpec random_shape(std::mt19937_64& rng, ShapeFamily family, int width, int height, double cx,
                       double cy);

struct SynthOptions {
  /// Sampling weights for bar, disc, L-shape, ring.
  std::array<double, kShapeFamilies> family_weights{0.35, 0.25, 0.30, 0.10};
  /// Maximum offset of a single object's center from the canvas center, as a
  /// fraction of the canvas size.
  double max_offset = 0.1;
};

/// Renders shapes with shading into red/green and a synthetic depth into the
/// third channel. Ground truth is the concatenation of every shape's grasps.
Sample render_scene(std::span<const ShapeSpec> shapes, int width, int height, std::mt19937_64& rng,
                    std::string id = "scene");

/// Random scene of `n_objects` non-overlapping shapes. Canvas must be >= 64x64.
Sample make_synthetic_scene(std::mt19937_64& rng, int width, int height, int n_objects,
                            const SynthOptions& options = {});
/// Same as make_synthetic_scene with the family fixed.
Sample make_family_scene(std::mt19937_64& rng, int width, int height, ShapeFamily family,
                         const SynthOptions& options = {});

inline constexpr int kSizeBuckets = 8;

/// Single-object train and test scenes with disjoint objects: for every
/// family, `held_out` of its size buckets are drawn at random and reserved for
/// the test side. Scene ids are "<prefix>NNNNN", numbered train first.
Split make_objectwise_synthetic(std::mt19937_64& rng, int width, int height, int n_train, int n_test,
                                int held_out = 2, const SynthOptions& options = {},
                                const std::string& prefix = "syn");

}  // namespace dsgd
