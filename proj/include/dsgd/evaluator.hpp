#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgd/dataset.hpp"
#include "dsgd/detector.hpp"
#include "dsgd/selector.hpp"

namespace dsgd {

/// Anything that produces branch outputs for an image.
class GraspDetector {
 public:
  virtual ~GraspDetector() = default;
  virtual Detection detect(const Sample& sample) = 0;
};

/// Wraps a trained Detector. Only the sample's image is used.
class NetworkDetector : public GraspDetector {
 public:
  explicit NetworkDetector(Detector& net) : net_(net) {}
  Detection detect(const Sample& sample) override { return net_.detect(sample.image); }

 private:
  Detector& net_;
};

/// Echoes the first ground truth of every sample on every branch.
class OracleDetector : public GraspDetector {
 public:
  Detection detect(const Sample& sample) override;
};

struct EvalConfig {
  SelectorConfig selector;
  /// Candidates at or above this confidence count toward multi-grasp recall.
  double recall_threshold = 0.9;
};

struct EvalRecord {
  std::string id;
  GraspSource source = GraspSource::GGN;
  GraspRect grasp;
  bool match = false;
  bool rgn_match = false, pgn_match = false, ggn_match = false;
};

struct EvalReport {
  std::size_t images = 0;
  double rgn = 0, pgn = 0, ggn = 0, cascade = 0;
  std::map<std::string, std::size_t> usage;
  /// Fraction of ground truths matched by some candidate at or above the
  /// recall threshold, over all images.
  double multi_grasp_recall = 0;
  std::vector<EvalRecord> records;

  nlohmann::ordered_json to_json() const;
};

/// Scores one selected grasp per image plus the top candidate of each branch.
/// Throws std::invalid_argument on an empty split.
EvalReport evaluate(GraspDetector& detector, std::span<const Sample> split, const EvalConfig& config = {});

void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace dsgd
