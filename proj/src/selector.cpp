#include "dsgd/selector.hpp"

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

const Candidate* most_confident(std::span<const Candidate> list) {
  const Candidate* best = nullptr;
  for (const auto& c : list)
    if (!best || c.rho > best->rho) best = &c;
  return best;
}

}  // namespace

std::string_view source_name(GraspSource s) {
  switch (s) {
    case GraspSource::RGN: return "rgn";
    case GraspSource::PGN: return "pgn";
    case GraspSource::GGN: return "ggn";
  }
  return "?";
}

void SelectorConfig::validate() const {
  if (!(delta_rgn >= 0 && delta_rgn <= 1) || !(delta_pgn >= 0 && delta_pgn <= 1))
    throw ConfigError("selector thresholds must lie in [0, 1]");
}

std::vector<std::pair<GraspSource, Candidate>> SelectionResult::confident(double threshold) const {
  std::vector<std::pair<GraspSource, Candidate>> out;
  for (const auto& c : rgn)
    if (c.rho >= threshold) out.emplace_back(GraspSource::RGN, c);
  for (const auto& c : pgn)
    if (c.rho >= threshold) out.emplace_back(GraspSource::PGN, c);
  if (ggn.rho >= threshold) out.emplace_back(GraspSource::GGN, ggn);
  return out;
}

SelectionResult select_grasp(std::span<const Candidate> rgn, std::span<const Candidate> pgn,
                             const Candidate& ggn, const SelectorConfig& config) {
  SelectionResult r;
  r.rgn.assign(rgn.begin(), rgn.end());
  r.pgn.assign(pgn.begin(), pgn.end());
  r.ggn = ggn;
  if (const Candidate* c = most_confident(rgn); c && c->rho > config.delta_rgn) {
    r.grasp = *c;
    r.source = GraspSource::RGN;
  } else if (const Candidate* p = most_confident(pgn); p && p->rho > config.delta_pgn) {
    r.grasp = *p;
    r.source = GraspSource::PGN;
  } else {
    r.grasp = ggn;
    r.source = GraspSource::GGN;
  }
  return r;
}

}  // namespace dsgd
