#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "dsgd/dataset.hpp"
#include "dsgd/error.hpp"
#include "dsgd/evaluator.hpp"
#include "dsgd/selector.hpp"
#include "test_util.hpp"

using namespace dsgd;

namespace {

Candidate cand(double x, double rho) { return GraspRect::make(x, 10, 5, 3, 0.2, rho); }

struct Case {
  double rgn, pgn;
  GraspSource want;
};

}  // namespace

TEST(Selector, DecisionTable) {
  const Candidate g = cand(99, 0.3);
  const Case cases[] = {
      {0.96, 0.99, GraspSource::RGN}, {0.80, 0.92, GraspSource::PGN}, {0.80, 0.85, GraspSource::GGN},
      {0.95, 0.92, GraspSource::PGN},  // equality falls through
      {0.95, 0.90, GraspSource::GGN},  {0.9500001, 0.0, GraspSource::RGN},
      {0.0, 0.9000001, GraspSource::PGN},
  };
  for (const auto& c : cases) {
    const std::vector<Candidate> r{cand(1, c.rgn)}, p{cand(2, c.pgn)};
    const SelectionResult s = select_grasp(r, p, g);
    EXPECT_EQ(s.source, c.want) << c.rgn << " " << c.pgn;
    const double x = c.want == GraspSource::RGN ? 1 : c.want == GraspSource::PGN ? 2 : 99;
    EXPECT_EQ(s.grasp.x, x);
  }
}

TEST(Selector, EmptyListsFallThrough) {
  const Candidate g = cand(99, 0.1);
  EXPECT_EQ(select_grasp({}, {}, g).source, GraspSource::GGN);
  const std::vector<Candidate> p{cand(2, 0.99)};
  EXPECT_EQ(select_grasp({}, p, g).source, GraspSource::PGN);
}

TEST(Selector, OrderInvariantWithFirstTieWins) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<Candidate> r, p;
    for (int i = 0; i < 6; ++i) {
      r.push_back(cand(i, u(rng)));
      p.push_back(cand(10 + i, u(rng)));
    }
    const SelectionResult a = select_grasp(r, p, cand(99, 0));
    std::shuffle(r.begin(), r.end(), rng);
    std::shuffle(p.begin(), p.end(), rng);
    const SelectionResult b = select_grasp(r, p, cand(99, 0));
    EXPECT_EQ(a.source, b.source);
    EXPECT_EQ(a.grasp.x, b.grasp.x);
    // Selected grasp is a member of its branch's list.
    const auto& list = b.source == GraspSource::RGN ? r : p;
    if (b.source != GraspSource::GGN)
      EXPECT_TRUE(std::any_of(list.begin(), list.end(), [&](const Candidate& c) { return c.x == b.grasp.x; }));
  }
  const std::vector<Candidate> tie{cand(1, 0.97), cand(2, 0.97)};
  EXPECT_EQ(select_grasp(tie, {}, cand(99, 0)).grasp.x, 1);
}

TEST(Selector, ConfidentCandidatesAndValidation) {
  const std::vector<Candidate> r{cand(1, 0.95), cand(2, 0.5)}, p{cand(3, 0.9)};
  const SelectionResult s = select_grasp(r, p, cand(4, 0.91));
  const auto c = s.confident(0.9);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(source_name(GraspSource::RGN), "rgn");
  EXPECT_EQ(source_name(GraspSource::GGN), "ggn");
  SelectorConfig bad;
  bad.delta_rgn = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NO_THROW(SelectorConfig{}.validate());
}

// ---- Evaluator --------------------------------------------------------------

namespace {

std::vector<Sample> corpus(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> s;
  for (int i = 0; i < n; ++i) {
    s.push_back(make_synthetic_scene(rng, 64, 64, 1 + i % 2));
    s.back().id = "img" + std::to_string(i);
  }
  return s;
}

class OffImage : public GraspDetector {
 public:
  Detection detect(const Sample&) override {
    Detection d;
    d.ggn = GraspRect::make(-500, -500, 5, 5, 0, 0.99);
    d.rgn = {GraspRect::make(-500, 400, 5, 5, 0, 0.99)};
    d.pgn = {GraspRect::make(900, -300, 5, 5, 0, 0.99)};
    return d;
  }
};

// Confidence pattern cycles through the three cascade branches; only the
// PGN candidate is correct.
class Mixed : public GraspDetector {
 public:
  Detection detect(const Sample& s) override {
    Detection d;
    const GraspRect& gt = s.grasps.front();
    const int k = std::stoi(s.id.substr(3)) % 3;
    d.ggn = GraspRect::make(gt.x + 30, gt.y, gt.w, gt.h, gt.theta, 0.5);
    d.rgn = {GraspRect::make(gt.x, gt.y + 30, gt.w, gt.h, gt.theta, k == 0 ? 0.99 : 0.2)};
    d.pgn = {GraspRect::make(gt.x, gt.y, gt.w, gt.h, gt.theta, k == 1 ? 0.95 : 0.2)};
    return d;
  }
};

}  // namespace

TEST(Evaluator, OracleScoresOne) {
  OracleDetector o;
  const auto s = corpus(12, 2);
  const EvalReport r = evaluate(o, s);
  EXPECT_EQ(r.images, 12u);
  EXPECT_DOUBLE_EQ(r.cascade, 1.0);
  EXPECT_DOUBLE_EQ(r.rgn, 1.0);
  EXPECT_DOUBLE_EQ(r.pgn, 1.0);
  EXPECT_DOUBLE_EQ(r.ggn, 1.0);
}

TEST(Evaluator, OffImageScoresZero) {
  OffImage o;
  const EvalReport r = evaluate(o, corpus(6, 3));
  EXPECT_DOUBLE_EQ(r.cascade, 0.0);
  EXPECT_DOUBLE_EQ(r.rgn, 0.0);
  EXPECT_DOUBLE_EQ(r.pgn, 0.0);
  EXPECT_DOUBLE_EQ(r.ggn, 0.0);
  EXPECT_DOUBLE_EQ(r.multi_grasp_recall, 0.0);
}

TEST(Evaluator, UsageAndIndependentRecompute) {
  Mixed m;
  const auto s = corpus(9, 4);
  const EvalReport r = evaluate(m, s);
  std::size_t total = 0;
  for (const auto& [k, v] : r.usage) total += v;
  EXPECT_EQ(total, s.size());
  EXPECT_EQ(r.usage.at("rgn"), 3u);
  EXPECT_EQ(r.usage.at("pgn"), 3u);
  EXPECT_EQ(r.usage.at("ggn"), 3u);
  ASSERT_EQ(r.records.size(), s.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool m2 = rectangle_match(r.records[i].grasp, s[i].grasps);
    EXPECT_EQ(r.records[i].match, m2);
    hits += m2;
  }
  EXPECT_DOUBLE_EQ(r.cascade, static_cast<double>(hits) / s.size());
  EXPECT_NEAR(r.cascade, 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.pgn, 1.0);
  EXPECT_DOUBLE_EQ(r.rgn, 0.0);
}

TEST(Evaluator, PureAndStableReport) {
  Mixed m;
  const auto s = corpus(5, 5);
  const auto a = evaluate(m, s).to_json().dump();
  const auto b = evaluate(m, s).to_json().dump();
  EXPECT_EQ(a, b);
  const auto j = evaluate(m, s).to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  ASSERT_FALSE(keys.empty());
  EXPECT_EQ(keys.back(), "records");
  const auto& rec = j.at("records").at(0);
  std::vector<std::string> rk;
  for (auto it = rec.begin(); it != rec.end(); ++it) rk.push_back(it.key());
  ASSERT_GE(rk.size(), 4u);
  EXPECT_EQ(rk[0], "id");
  EXPECT_EQ(rk[1], "source");
  EXPECT_EQ(rk[2], "rho");
  EXPECT_EQ(rk[3], "match");

  testutil::TempDir dir("report");
  write_report(dir.path() / "r.json", evaluate(m, s));
  std::ifstream in(dir.path() / "r.json");
  EXPECT_EQ(nlohmann::ordered_json::parse(in).dump(), a);
}

TEST(Evaluator, EmptySplitRejected) {
  OracleDetector o;
  EXPECT_THROW(evaluate(o, std::vector<Sample>{}), std::invalid_argument);
}
