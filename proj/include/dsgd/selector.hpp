#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dsgd/geometry.hpp"

namespace dsgd {

enum class GraspSource { RGN, PGN, GGN };
std::string_view source_name(GraspSource s);

/// A grasp with its branch confidence (GraspRect::rho).
using Candidate = GraspRect;

struct SelectorConfig {
  double delta_rgn = 0.95;
  double delta_pgn = 0.90;
  void validate() const;
};

struct SelectionResult {
  GraspRect grasp;
  GraspSource source = GraspSource::GGN;
  std::vector<Candidate> rgn;
  std::vector<Candidate> pgn;
  Candidate ggn;

  /// Candidates from every branch with rho at or above `threshold`.
  std::vector<std::pair<GraspSource, Candidate>> confident(double threshold) const;
};

/// Most confident region grasp if its rho > delta_rgn, else the most
/// confident pixel grasp if its rho > delta_pgn, else the global grasp.
/// Ties go to the earliest candidate in each list.
SelectionResult select_grasp(std::span<const Candidate> rgn, std::span<const Candidate> pgn,
                             const Candidate& ggn, const SelectorConfig& config = {});

}  // namespace dsgd
