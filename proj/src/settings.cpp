#include "dsgd/settings.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("invalid value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid value '" + v + "' for " + key + " (expected true or false)");
}

using Setter = std::function<void(RunSettings&, const std::string&, const std::string&)>;

template <typename T, typename Get>
Setter number(Get get) {
  return [get](RunSettings& s, const std::string& k, const std::string& v) { get(s) = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"model",
       [](RunSettings& s, const std::string& k, const std::string& v) {
         if (v == "desk") s.detector = DetectorConfig::desk();
         else if (v == "lite") s.detector = DetectorConfig::lite();
         else throw ConfigError("invalid value '" + v + "' for " + k + " (expected desk or lite)");
         s.model = v;
       }},
      {"image_size", number<int>([](RunSettings& s) -> int& { return s.image_size; })},
      {"epochs", number<int>([](RunSettings& s) -> int& { return s.train.epochs; })},
      {"base_lr", number<double>([](RunSettings& s) -> double& { return s.train.base_lr; })},
      {"lr_drop", number<double>([](RunSettings& s) -> double& { return s.train.lr_drop; })},
      {"weight_decay", number<double>([](RunSettings& s) -> double& { return s.train.weight_decay; })},
      {"init_std", number<double>([](RunSettings& s) -> double& { return s.train.init_std; })},
      {"batch_size", number<int>([](RunSettings& s) -> int& { return s.train.batch_size; })},
      {"seed", number<std::uint64_t>([](RunSettings& s) -> std::uint64_t& { return s.train.seed; })},
      {"beta1", number<double>([](RunSettings& s) -> double& { return s.train.beta1; })},
      {"beta2", number<double>([](RunSettings& s) -> double& { return s.train.beta2; })},
      {"adam_eps", number<double>([](RunSettings& s) -> double& { return s.train.adam_eps; })},
      {"checkpoint_every", number<int>([](RunSettings& s) -> int& { return s.train.checkpoint_every; })},
      {"val_fraction", number<double>([](RunSettings& s) -> double& { return s.train.val_fraction; })},
      {"augment",
       [](RunSettings& s, const std::string& k, const std::string& v) { s.train.augment = parse_bool(k, v); }},
      {"gen_examples", number<int>([](RunSettings& s) -> int& { return s.train.gen_examples; })},
      {"lambda1", number<double>([](RunSettings& s) -> double& { return s.train.loss.lambda1; })},
      {"lambda2", number<double>([](RunSettings& s) -> double& { return s.train.loss.lambda2; })},
      {"lambda3", number<double>([](RunSettings& s) -> double& { return s.train.loss.lambda3; })},
      {"delta_rgn", number<double>([](RunSettings& s) -> double& { return s.selector.delta_rgn; })},
      {"delta_pgn", number<double>([](RunSettings& s) -> double& { return s.selector.delta_pgn; })},
      {"growth_rate", number<int>([](RunSettings& s) -> int& { return s.detector.backbone.growth_rate; })},
      {"top_k", number<int>([](RunSettings& s) -> int& { return s.detector.rgn.top_k; })},
      {"nms_iou", number<double>([](RunSettings& s) -> double& { return s.detector.rgn.nms_iou; })},
  };
  return m;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

RunSettings::RunSettings() { train.base_lr = kDeskBaseLr; }

std::vector<std::string> settings_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void apply_setting(RunSettings& s, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) {
    std::string valid;
    for (const auto& k : settings_keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  it->second(s, key, value);
  try {
    s.train.validate();
    s.selector.validate();
    s.detector.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("invalid value '" + value + "' for " + key + ": " + e.what());
  }
}

void apply_settings(RunSettings& s, const std::map<std::string, std::string>& kv) {
  if (const auto m = kv.find("model"); m != kv.end()) apply_setting(s, m->first, m->second);
  for (const auto& [k, v] : kv)
    if (k != "model") apply_setting(s, k, v);
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

nlohmann::ordered_json settings_json(const RunSettings& s) {
  const auto& t = s.train;
  nlohmann::ordered_json j;
  j["model"] = s.model;
  j["image_size"] = s.image_size;
  j["detector"] = nlohmann::json(s.detector);
  j["train"] = {{"epochs", t.epochs},
                {"base_lr", t.base_lr},
                {"lr_drop", t.lr_drop},
                {"weight_decay", t.weight_decay},
                {"init_std", t.init_std},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"checkpoint_every", t.checkpoint_every},
                {"val_fraction", t.val_fraction},
                {"augment", t.augment},
                {"gen_examples", t.gen_examples},
                {"lambda1", t.loss.lambda1},
                {"lambda2", t.loss.lambda2},
                {"lambda3", t.loss.lambda3}};
  j["selector"] = {{"delta_rgn", s.selector.delta_rgn}, {"delta_pgn", s.selector.delta_pgn}};
  return j;
}

}  // namespace dsgd
