#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "dsgd/archive.hpp"
#include "dsgd/dataset.hpp"
#include "dsgd/detector.hpp"
#include "dsgd/evaluator.hpp"
#include "dsgd/settings.hpp"
#include "dsgd/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsgd;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Missing inputs and bad configuration exit with 2.
struct UsageError : Error {
  using Error::Error;
};

void require_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key=value settings file");
  app->add_option("--set", c.sets, "override one setting, key=value (repeatable)");
  app->add_option("--seed", c.seed, "random seed");
}

RunSettings resolve(const Common& c) {
  RunSettings s;
  std::map<std::string, std::string> kv;
  if (!c.config_file.empty()) {
    require_path(c.config_file, "config file");
    kv = read_key_value_file(c.config_file);
  }
  apply_settings(s, kv);
  std::map<std::string, std::string> flags;
  for (const auto& item : c.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
    flags[item.substr(0, eq)] = item.substr(eq + 1);
  }
  apply_settings(s, flags);
  if (c.seed) s.train.seed = *c.seed;
  s.detector.validate();
  s.train.validate();
  s.selector.validate();
  return s;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunSettings& s, const json& inputs,
                    const json& outputs) {
  fs::create_directories(dir);
  json m;
  m["command"] = command;
  m["config"] = settings_json(s);
  m["seed"] = s.train.seed;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["version"] = kVersion;
  std::ofstream(dir / "run_manifest.json") << m.dump(2) << '\n';
}

json rect_json(const GraspRect& r) {
  return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"theta", r.theta}};
}

GraspRect rect_from_json(const nlohmann::json& j, double rho) {
  return GraspRect::make(j.at("x"), j.at("y"), j.at("w"), j.at("h"), j.at("theta"), std::clamp(rho, 0.0, 1.0));
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  int n = 500;
  int test = 0;
  int objects = 1;
  int held_out = 2;
};

int run_synth(const SynthArgs& a) {
  const RunSettings s = resolve(a.common);
  const fs::path out(a.out);
  write_manifest(out, "synth", s, json::object(),
                 {{"corpus", a.out}, {"n", a.n}, {"test", a.test}, {"objects", a.objects}});
  std::mt19937_64 rng(s.train.seed);
  if (a.test > 0) {
    if (a.objects != 1) throw UsageError("--test needs single-object scenes (--objects 1)");
    const Split split = make_objectwise_synthetic(rng, s.image_size, s.image_size, a.n, a.test, a.held_out);
    write_corpus(out / "train", split.train);
    write_corpus(out / "test", split.test);
    spdlog::info("wrote {} train and {} test scenes to {}", split.train.size(), split.test.size(), a.out);
  } else {
    std::vector<Sample> samples;
    for (int i = 0; i < a.n; ++i) {
      Sample smp = make_synthetic_scene(rng, s.image_size, s.image_size, a.objects);
      smp.id = fmt::format("syn{:05d}", i);
      samples.push_back(std::move(smp));
    }
    write_corpus(out, samples);
    spdlog::info("wrote {} scenes to {}", samples.size(), a.out);
  }
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data, out, head = "all", resume, init;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr;
};

int run_train(const TrainArgs& a) {
  Common c = a.common;
  if (a.epochs) c.sets.push_back("epochs=" + std::to_string(*a.epochs));
  if (a.batch_size) c.sets.push_back("batch_size=" + std::to_string(*a.batch_size));
  if (a.lr) c.sets.push_back(fmt::format("base_lr={}", *a.lr));
  const RunSettings s = resolve(c);
  require_path(a.data, "training corpus");
  if (!a.resume.empty()) require_path(a.resume, "checkpoint");
  if (!a.init.empty()) require_path(a.init, "checkpoint");
  std::vector<Head> heads;
  if (a.head == "all") heads = {Head::Joint, Head::Gen};
  else heads = {parse_head(a.head)};
  if (!a.resume.empty() && heads.size() != 1) throw UsageError("--resume needs a single --head");

  const fs::path out(a.out);
  write_manifest(out, "train", s, {{"data", a.data}, {"resume", a.resume}, {"init", a.init}},
                 {{"dir", a.out}, {"head", a.head}});
  const auto corpus = load_corpus(a.data);
  std::vector<Sample> train = corpus, val;
  if (s.train.val_fraction > 0) {
    std::set<std::string> objects;
    for (const auto& smp : corpus) objects.insert(smp.object_id);
    if (objects.size() >= 2) {
      Split split = object_wise_split(corpus, 1.0 - s.train.val_fraction, s.train.seed);
      train = std::move(split.train);
      val = std::move(split.test);
    }
  }
  spdlog::info("{} training and {} validation samples", train.size(), val.size());
  Detector det = a.init.empty() ? Detector(s.detector) : Detector::load(a.init);
  for (Head h : heads) {
    const auto res = train_loop(det, h, train, val, s.train, out,
                                a.resume.empty() ? std::nullopt : std::optional<fs::path>(a.resume));
    if (res.best_checkpoint) {
      // Later heads start from the best weights of the earlier ones.
      Detector best = Detector::load(*res.best_checkpoint);
      det.load_archive(best.to_archive());
    }
  }
  det.save(out / "detector.ckpt", {{"heads", a.head}});
  spdlog::info("saved {}", (out / "detector.ckpt").string());
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string data, checkpoint, out = "report.json";
  bool oracle = false;
};

int run_eval(const EvalArgs& a) {
  const RunSettings s = resolve(a.common);
  require_path(a.data, "evaluation corpus");
  if (!a.oracle) {
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required unless --oracle is given");
    require_path(a.checkpoint, "checkpoint");
  }
  const fs::path out(a.out);
  write_manifest(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "eval", s,
                 {{"data", a.data}, {"checkpoint", a.checkpoint}, {"oracle", a.oracle}}, {{"report", a.out}});
  const auto corpus = load_corpus(a.data);
  EvalConfig ec;
  ec.selector = s.selector;
  EvalReport rep;
  if (a.oracle) {
    OracleDetector od;
    rep = evaluate(od, corpus, ec);
  } else {
    Detector det = Detector::load(a.checkpoint);
    NetworkDetector nd(det);
    rep = evaluate(nd, corpus, ec);
  }
  write_report(out, rep);
  std::printf("cascade %.4f  rgn %.4f  pgn %.4f  ggn %.4f  (n=%zu)\n", rep.cascade, rep.rgn, rep.pgn, rep.ggn,
              rep.images);
  return 0;
}

// ---- detect ------------------------------------------------------------------

struct DetectArgs {
  Common common;
  std::string data, checkpoint, out = "detections.jsonl", maps;
  int max_candidates = 20;
};

int run_detect(const DetectArgs& a) {
  const RunSettings s = resolve(a.common);
  require_path(a.data, "input corpus");
  require_path(a.checkpoint, "checkpoint");
  const fs::path out(a.out);
  write_manifest(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "detect", s,
                 {{"data", a.data}, {"checkpoint", a.checkpoint}}, {{"records", a.out}, {"maps", a.maps}});
  const auto corpus = load_corpus(a.data);
  Detector det = Detector::load(a.checkpoint);
  std::ofstream rec(out);
  if (!rec) throw Error("cannot write " + a.out);
  if (!a.maps.empty()) fs::create_directories(a.maps);
  for (const auto& smp : corpus) {
    const Detection d = det.detect(smp.image, !a.maps.empty());
    const SelectionResult sel = select_grasp(d.rgn, d.pgn, d.ggn, s.selector);
    json line;
    line["id"] = smp.id;
    line["ggn"] = {{"rect", rect_json(d.ggn)}, {"rho", d.ggn.rho}};
    line["rgn"] = json::array();
    for (std::size_t i = 0; i < d.regions.size() && static_cast<int>(i) < a.max_candidates; ++i) {
      const auto& r = d.regions[i];
      line["rgn"].push_back({{"rect", rect_json(r.rect)},
                             {"rho", r.rect.rho},
                             {"region", {{"x", r.region.x}, {"y", r.region.y}, {"w", r.region.w}, {"h", r.region.h}}}});
    }
    line["pgn"] = json::array();
    for (std::size_t i = 0; i < d.pgn.size() && static_cast<int>(i) < a.max_candidates; ++i)
      line["pgn"].push_back({{"rect", rect_json(d.pgn[i])}, {"rho", d.pgn[i].rho}});
    line["selected"] = {{"source", source_name(sel.source)}, {"rect", rect_json(sel.grasp)}, {"rho", sel.grasp.rho}};
    rec << line.dump() << '\n';
    if (!a.maps.empty()) {
      Archive m;
      m.meta = {{"id", smp.id}, {"width", d.maps.width}, {"height", d.maps.height}};
      const int w = d.maps.width, h = d.maps.height;
      auto plane = [&](const std::vector<float>& v, int c) {
        Tensor t({c, h, w});
        std::copy(v.begin(), v.end(), t.data());
        return t;
      };
      m.tensors = {{"xy", plane(d.maps.xy, 1)},
                   {"w", plane(d.maps.w, 1)},
                   {"h", plane(d.maps.h, 1)},
                   {"theta", plane(d.maps.theta, kAngleBins)}};
      write_archive(fs::path(a.maps) / (smp.id + ".maps"), m);
    }
  }
  spdlog::info("wrote {} records to {}", corpus.size(), a.out);
  return 0;
}

// ---- render ------------------------------------------------------------------

struct RenderArgs {
  Common common;
  std::string records, data, out, maps;
  double threshold = 0.9;
  int scale = 4;
  std::vector<int> selected_color{0, 255, 0};
  std::vector<int> candidate_color{255, 200, 0};
};

cv::Mat to_bgr(const Image& im, int scale) {
  cv::Mat m(im.height, im.width, CV_8UC3);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      m.at<cv::Vec3b>(y, x) = {im.at(2, y, x), im.at(1, y, x), im.at(0, y, x)};
  cv::Mat big;
  cv::resize(m, big, {}, scale, scale, cv::INTER_NEAREST);
  return big;
}

void draw_rect(cv::Mat& img, const GraspRect& r, int scale, const std::vector<int>& rgb, int thickness) {
  const auto q = to_corners(r);
  const cv::Scalar color(rgb[2], rgb[1], rgb[0]);
  for (int k = 0; k < 4; ++k) {
    const auto& a = q[k];
    const auto& b = q[(k + 1) % 4];
    // Plate edges (v0-v1, v2-v3) are drawn thicker than the jaw-opening edges.
    cv::line(img, {static_cast<int>((a.x + 0.5) * scale), static_cast<int>((a.y + 0.5) * scale)},
             {static_cast<int>((b.x + 0.5) * scale), static_cast<int>((b.y + 0.5) * scale)}, color,
             k % 2 == 0 ? thickness + 1 : thickness, cv::LINE_AA);
  }
}

int run_render(const RenderArgs& a) {
  const RunSettings s = resolve(a.common);
  require_path(a.records, "detection records");
  require_path(a.data, "input corpus");
  if (!a.maps.empty()) require_path(a.maps, "map directory");
  if (a.selected_color.size() != 3 || a.candidate_color.size() != 3)
    throw UsageError("colors take three components (R G B)");
  write_manifest(a.out, "render", s, {{"records", a.records}, {"data", a.data}, {"maps", a.maps}},
                 {{"dir", a.out}, {"threshold", a.threshold}});
  std::map<std::string, Sample> by_id;
  for (auto& smp : load_corpus(a.data)) by_id.emplace(smp.id, std::move(smp));
  std::ifstream in(a.records);
  std::string line;
  int written = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const std::string id = rec.at("id");
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw UsageError("record " + id + " has no image in " + a.data);
    cv::Mat img = to_bgr(it->second.image, a.scale);
    for (const char* branch : {"rgn", "pgn"})
      for (const auto& c : rec.at(branch))
        if (c.at("rho").get<double>() >= a.threshold)
          draw_rect(img, rect_from_json(c.at("rect"), c.at("rho")), a.scale, a.candidate_color, 1);
    if (rec.at("ggn").at("rho").get<double>() >= a.threshold)
      draw_rect(img, rect_from_json(rec.at("ggn").at("rect"), rec.at("ggn").at("rho")), a.scale,
                a.candidate_color, 1);
    const auto& sel = rec.at("selected");
    draw_rect(img, rect_from_json(sel.at("rect"), sel.at("rho")), a.scale, a.selected_color, 2);
    if (!a.maps.empty()) {
      const fs::path mp = fs::path(a.maps) / (id + ".maps");
      if (fs::exists(mp)) {
        const Archive m = read_archive(mp);
        const Tensor* xy = m.find("xy");
        if (!xy) throw Error(mp.string() + " has no xy map");
        cv::Mat q(xy->dim(1), xy->dim(2), CV_8U);
        for (int y = 0; y < q.rows; ++y)
          for (int x = 0; x < q.cols; ++x)
            q.at<std::uint8_t>(y, x) =
                static_cast<std::uint8_t>(std::clamp((*xy)[static_cast<std::size_t>(y) * q.cols + x], 0.0f, 1.0f) * 255);
        cv::Mat heat, big;
        cv::applyColorMap(q, heat, cv::COLORMAP_JET);
        cv::resize(heat, big, img.size(), 0, 0, cv::INTER_NEAREST);
        cv::hconcat(img, big, img);
      }
    }
    if (!cv::imwrite((fs::path(a.out) / (id + ".png")).string(), img)) throw Error("cannot write overlay for " + id);
    ++written;
  }
  spdlog::info("wrote {} overlays to {}", written, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Densely supervised grasp detector"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, sa.common);
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--n", sa.n, "scene count (training scenes with --test)")->check(CLI::PositiveNumber);
  synth->add_option("--test", sa.test, "also write an object-wise held-out test split of this size");
  synth->add_option("--objects", sa.objects, "objects per scene")->check(CLI::PositiveNumber);
  synth->add_option("--held-out", sa.held_out, "size buckets per family reserved for the test split");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one head, the joint model, or all (joint then gen)");
  add_common(train, ta.common);
  train->add_option("--data", ta.data, "training corpus")->required();
  train->add_option("--out", ta.out, "run directory")->required();
  train->add_option("--head", ta.head, "ggpn, gen, rgn, pgn, joint or all");
  train->add_option("--resume", ta.resume, "checkpoint to resume");
  train->add_option("--init", ta.init, "detector checkpoint to start from");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--lr", ta.lr, "base learning rate");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a detector on a corpus");
  add_common(eval, ea.common);
  eval->add_option("--data", ea.data, "evaluation corpus")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "detector checkpoint");
  eval->add_option("--out", ea.out, "report path");
  eval->add_flag("--oracle", ea.oracle, "echo ground truth instead of running a network");

  DetectArgs da;
  auto* detect = app.add_subcommand("detect", "write per-image grasp records");
  add_common(detect, da.common);
  detect->add_option("--data", da.data, "input corpus")->required();
  detect->add_option("--checkpoint", da.checkpoint, "detector checkpoint")->required();
  detect->add_option("--out", da.out, "record file (JSON lines)");
  detect->add_option("--maps", da.maps, "also dump pixel maps into this directory");
  detect->add_option("--max-candidates", da.max_candidates, "candidates kept per branch");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "draw grasp overlays from detection records");
  add_common(render, ra.common);
  render->add_option("--records", ra.records, "detection records")->required();
  render->add_option("--data", ra.data, "corpus holding the images")->required();
  render->add_option("--out", ra.out, "overlay directory")->required();
  render->add_option("--maps", ra.maps, "pixel map directory for heatmap panels");
  render->add_option("--threshold", ra.threshold, "confidence for drawing extra candidates");
  render->add_option("--scale", ra.scale, "pixel magnification")->check(CLI::PositiveNumber);
  render->add_option("--selected-color", ra.selected_color, "R G B")->expected(3);
  render->add_option("--candidate-color", ra.candidate_color, "R G B")->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*detect) return run_detect(da);
    if (*render) return run_render(ra);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
