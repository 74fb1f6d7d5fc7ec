#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "dsgd/dataset.hpp"
#include "dsgd/detector.hpp"
#include "dsgd/selector.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dsgd;
using dsgd::testutil::TempDir;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

/// Runs the CLI with stdout and stderr captured into one file.
CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string("\"") + DSGD_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GraspRect rect_of(const nlohmann::json& j, double rho) {
  return GraspRect::make(j.at("x"), j.at("y"), j.at("w"), j.at("h"), j.at("theta"), rho);
}

}  // namespace

TEST(Cli, SynthIsDeterministicForASeed) {
  TempDir dir("cli-synth");
  const auto a = dir.path() / "a", b = dir.path() / "b";
  ASSERT_EQ(cli("synth --out " + a.string() + " --n 6 --seed 11", dir.path()).code, 0);
  ASSERT_EQ(cli("synth --out " + b.string() + " --n 6 --seed 11", dir.path()).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    const auto twin = b / fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(twin)) << twin;
    EXPECT_EQ(slurp(e.path()), slurp(twin)) << e.path();
    ++files;
  }
  EXPECT_GT(files, 6u);
  EXPECT_EQ(load_corpus(a).size(), 6u);
}

TEST(Cli, ObjectWiseSynthWritesBothSplits) {
  TempDir dir("cli-split");
  ASSERT_EQ(cli("synth --out " + dir.path().string() + " --n 20 --test 8", dir.path()).code, 0);
  const auto train = load_corpus(dir.path() / "train");
  const auto test = load_corpus(dir.path() / "test");
  EXPECT_EQ(train.size(), 20u);
  EXPECT_EQ(test.size(), 8u);
  for (const auto& t : test)
    for (const auto& s : train) EXPECT_NE(t.object_id, s.object_id);
}

TEST(Cli, UnknownSettingExitsTwoAndListsKeys) {
  TempDir dir("cli-key");
  const CliRun r = cli("synth --out " + (dir.path() / "c").string() + " --n 1 --set not_a_key=3", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("not_a_key"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("base_lr"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("lambda1"), std::string::npos) << r.output;
}

TEST(Cli, MissingInputsExitTwo) {
  TempDir dir("cli-missing");
  const auto corpus = dir.path() / "c";
  ASSERT_EQ(cli("synth --out " + corpus.string() + " --n 2", dir.path()).code, 0);
  EXPECT_EQ(cli("eval --data " + corpus.string() + " --checkpoint " + (dir.path() / "none.ckpt").string(),
                dir.path()).code, 2);
  EXPECT_EQ(cli("train --data " + (dir.path() / "nowhere").string() + " --out " + (dir.path() / "r").string(),
                dir.path()).code, 2);
  EXPECT_EQ(cli("train --data " + corpus.string() + " --out " + (dir.path() / "r").string() +
                    " --set lambda1=1.5", dir.path()).code, 2);
  // Argument errors from the parser itself are also usage errors.
  EXPECT_NE(cli("eval", dir.path()).code, 0);
}

TEST(Cli, OracleEvalScoresOne) {
  TempDir dir("cli-oracle");
  const auto corpus = dir.path() / "c";
  ASSERT_EQ(cli("synth --out " + corpus.string() + " --n 10 --objects 2", dir.path()).code, 0);
  const auto report = dir.path() / "out" / "report.json";
  const CliRun r = cli("eval --oracle --data " + corpus.string() + " --out " + report.string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(report));
  EXPECT_EQ(j.at("images"), 10);
  EXPECT_DOUBLE_EQ(j.at("accuracy").at("cascade").get<double>(), 1.0);
  EXPECT_EQ(j.at("records").size(), 10u);
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "run_manifest.json"));
}

TEST(Cli, DetectRecordsReproduceSelectionAndRenderDrawsEach) {
  TempDir dir("cli-detect");
  const auto corpus = dir.path() / "c";
  ASSERT_EQ(cli("synth --out " + corpus.string() + " --n 4 --seed 3", dir.path()).code, 0);
  const auto ckpt = dir.path() / "det.ckpt";
  Detector(DetectorConfig::desk()).save(ckpt);

  const auto records = dir.path() / "det" / "records.jsonl";
  const auto maps = dir.path() / "maps";
  CliRun r = cli("detect --data " + corpus.string() + " --checkpoint " + ckpt.string() + " --out " +
                  records.string() + " --maps " + maps.string() + " --max-candidates 100000",
              dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir.path() / "det" / "run_manifest.json"));

  std::ifstream in(records);
  std::string line;
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ids.push_back(j.at("id"));
    // The selection must follow from the recorded candidates alone.
    std::vector<Candidate> rgn, pgn;
    for (const auto& c : j.at("rgn")) rgn.push_back(rect_of(c.at("rect"), c.at("rho")));
    for (const auto& c : j.at("pgn")) pgn.push_back(rect_of(c.at("rect"), c.at("rho")));
    const Candidate ggn = rect_of(j.at("ggn").at("rect"), j.at("ggn").at("rho"));
    const SelectionResult sel = select_grasp(rgn, pgn, ggn);
    EXPECT_EQ(std::string(source_name(sel.source)), j.at("selected").at("source").get<std::string>());
    EXPECT_NEAR(sel.grasp.rho, j.at("selected").at("rho").get<double>(), 1e-12);
    EXPECT_TRUE(fs::exists(maps / (ids.back() + ".maps")));
  }
  ASSERT_EQ(ids.size(), 4u);

  const auto overlays = dir.path() / "overlays";
  r = cli("render --records " + records.string() + " --data " + corpus.string() + " --out " + overlays.string() +
              " --maps " + maps.string(),
          dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const auto& id : ids) EXPECT_TRUE(fs::exists(overlays / (id + ".png"))) << id;
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(overlays)) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, ids.size());
}

TEST(Cli, ShortTrainingRunLeavesCheckpointsAndManifest) {
  TempDir dir("cli-train");
  const auto corpus = dir.path() / "c";
  ASSERT_EQ(cli("synth --out " + corpus.string() + " --n 4", dir.path()).code, 0);
  const auto run = dir.path() / "run";
  const CliRun r = cli("train --data " + corpus.string() + " --out " + run.string() +
                        " --head ggpn --epochs 1 --batch-size 2",
                    dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(run / "ggpn-0.ckpt"));
  EXPECT_TRUE(fs::exists(run / "ggpn-best.ckpt"));
  EXPECT_TRUE(fs::exists(run / "detector.ckpt"));
  EXPECT_TRUE(fs::exists(run / "metrics.jsonl"));
  const auto m = nlohmann::json::parse(slurp(run / "run_manifest.json"));
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("config").at("train").at("epochs"), 1);
}
