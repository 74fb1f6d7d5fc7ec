#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgd/detector.hpp"
#include "dsgd/selector.hpp"
#include "dsgd/trainer.hpp"

namespace dsgd {

/// Everything a run can be configured with, resolved from defaults, a flat
/// key=value file and command-line overrides, in that order.
struct RunSettings {
  std::string model = "desk";
  DetectorConfig detector = DetectorConfig::desk();
  TrainConfig train;
  SelectorConfig selector;
  int image_size = 64;

  RunSettings();
};

/// Desk-scale base learning rate; see README.
inline constexpr double kDeskBaseLr = 0.003;

std::vector<std::string> settings_keys();
/// Throws ConfigError naming the valid keys for an unknown key, or the
/// offending value for a malformed one.
void apply_setting(RunSettings& s, const std::string& key, const std::string& value);
/// Applies `model` first so that preset changes do not clobber explicit keys.
void apply_settings(RunSettings& s, const std::map<std::string, std::string>& kv);

/// Reads `key = value` lines; `#` starts a comment. Throws ParseError on a
/// line without '=' and Error on an unreadable file.
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

nlohmann::ordered_json settings_json(const RunSettings& s);

}  // namespace dsgd
