#include "dsgd/evaluator.hpp"

#include <fstream>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

nlohmann::ordered_json rect_json(const GraspRect& r) {
  return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"theta", r.theta}, {"rho", r.rho}};
}

}  // namespace

Detection OracleDetector::detect(const Sample& sample) {
  Detection d;
  if (sample.grasps.empty()) throw std::invalid_argument("oracle needs a ground truth");
  GraspRect g = sample.grasps.front();
  g.rho = 1.0;
  d.ggn = g;
  d.rgn = {g};
  d.pgn = {g};
  return d;
}

EvalReport evaluate(GraspDetector& detector, std::span<const Sample> split, const EvalConfig& config) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  config.selector.validate();
  EvalReport rep;
  rep.images = split.size();
  rep.usage = {{"rgn", 0}, {"pgn", 0}, {"ggn", 0}};
  std::size_t n_rgn = 0, n_pgn = 0, n_ggn = 0, n_cascade = 0, gt_total = 0, gt_found = 0;
  for (const Sample& s : split) {
    const Detection d = detector.detect(s);
    const SelectionResult sel = select_grasp(d.rgn, d.pgn, d.ggn, config.selector);
    EvalRecord r;
    r.id = s.id;
    r.source = sel.source;
    r.grasp = sel.grasp;
    r.match = rectangle_match(sel.grasp, s.grasps);
    r.rgn_match = !d.rgn.empty() && rectangle_match(d.rgn.front(), s.grasps);
    r.pgn_match = !d.pgn.empty() && rectangle_match(d.pgn.front(), s.grasps);
    r.ggn_match = rectangle_match(d.ggn, s.grasps);
    n_cascade += r.match;
    n_rgn += r.rgn_match;
    n_pgn += r.pgn_match;
    n_ggn += r.ggn_match;
    ++rep.usage[std::string(source_name(sel.source))];

    const auto confident = sel.confident(config.recall_threshold);
    for (const auto& gt : s.grasps) {
      ++gt_total;
      const std::vector<GraspRect> one{gt};
      for (const auto& [src, c] : confident)
        if (rectangle_match(c, one)) {
          ++gt_found;
          break;
        }
    }
    rep.records.push_back(std::move(r));
  }
  const double n = static_cast<double>(split.size());
  rep.cascade = n_cascade / n;
  rep.rgn = n_rgn / n;
  rep.pgn = n_pgn / n;
  rep.ggn = n_ggn / n;
  rep.multi_grasp_recall = gt_total ? static_cast<double>(gt_found) / gt_total : 0.0;
  return rep;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["images"] = images;
  j["accuracy"] = {{"cascade", cascade}, {"rgn", rgn}, {"pgn", pgn}, {"ggn", ggn}};
  j["usage"] = {{"rgn", usage.count("rgn") ? usage.at("rgn") : 0},
                {"pgn", usage.count("pgn") ? usage.at("pgn") : 0},
                {"ggn", usage.count("ggn") ? usage.at("ggn") : 0}};
  j["multi_grasp_recall"] = multi_grasp_recall;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records)
    j["records"].push_back({{"id", r.id},
                            {"source", source_name(r.source)},
                            {"rho", r.grasp.rho},
                            {"match", r.match},
                            {"rect", rect_json(r.grasp)},
                            {"branch_match", {{"rgn", r.rgn_match}, {"pgn", r.pgn_match}, {"ggn", r.ggn_match}}}});
  return j;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
}

}  // namespace dsgd
