#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgd/archive.hpp"
#include "dsgd/ggn.hpp"
#include "dsgd/pgn.hpp"
#include "dsgd/rgn.hpp"
#include "dsgd/selector.hpp"

namespace dsgd {

struct DetectorConfig {
  BackboneConfig backbone;
  RgnConfig rgn;
  int pgn_decoder_channels = 16;

  static DetectorConfig desk();
  static DetectorConfig lite();
  void validate() const;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

/// Network groups that can be trained or saved together.
enum class Part { Backbone, Ggpn, Gen, Srn, Rgpn, Pgn };

/// All branch outputs for one image.
struct Detection {
  Candidate ggn;
  std::vector<RegionGrasp> regions;
  std::vector<Candidate> rgn;
  std::vector<Candidate> pgn;
  PixelGraspMaps maps;
};

/// Shared trunk plus the three grasp branches and the grasp evaluation network.
class Detector {
 public:
  explicit Detector(const DetectorConfig& config = DetectorConfig::desk());

  const DetectorConfig& config() const { return config_; }
  nn::ParamSet params(std::initializer_list<Part> parts);
  nn::ParamSet all_params();
  void init(double head_std, std::uint64_t seed);

  /// Every branch in inference mode. Images must share one size.
  std::vector<Detection> detect(std::span<const Image* const> images, bool keep_maps = false);
  Detection detect(const Image& image, bool keep_maps = false);

  /// Runs GEN on grasp images built from `rects` and returns valid-class
  /// probabilities.
  std::vector<double> score_grasps(const Image& image, std::span<const GraspRect> rects);

  Archive to_archive() const;
  void load_archive(const Archive& a);
  void save(const std::filesystem::path& path, const nlohmann::json& meta = {}) const;
  static Detector load(const std::filesystem::path& path);

  Backbone backbone;
  Ggpn ggpn;
  Gen gen;
  Srn srn;
  Rgpn rgpn;
  Pgn pgn;

 private:
  DetectorConfig config_;
};

}  // namespace dsgd
