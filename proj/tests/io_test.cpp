#include <gtest/gtest.h>

#include <fstream>

#include "dsgd/archive.hpp"
#include "dsgd/detector.hpp"
#include "dsgd/error.hpp"
#include "dsgd/settings.hpp"
#include "test_util.hpp"

using namespace dsgd;

TEST(Archive, RoundTrip) {
  testutil::TempDir dir("arc");
  Archive a;
  a.meta["note"] = "x";
  Tensor t({2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5f * i - 1;
  a.tensors.emplace_back("w", t);
  a.tensors.emplace_back("empty", Tensor({0}));
  write_archive(dir.path() / "a.bin", a);
  const Archive b = read_archive(dir.path() / "a.bin");
  EXPECT_EQ(b.meta["note"], "x");
  ASSERT_NE(b.find("w"), nullptr);
  EXPECT_EQ(b.find("w")->shape(), t.shape());
  EXPECT_EQ(b.find("w")->vec(), t.vec());
  EXPECT_EQ(b.find("missing"), nullptr);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "a.bin.tmp"));
}

TEST(Archive, RejectsBadFiles) {
  testutil::TempDir dir("arc-bad");
  EXPECT_THROW(read_archive(dir.path() / "none.bin"), Error);
  std::ofstream(dir.path() / "magic.bin") << "NOTANARCHIVE-------";
  EXPECT_THROW(read_archive(dir.path() / "magic.bin"), Error);
  Archive a;
  a.tensors.emplace_back("w", Tensor({64}, 1.0f));
  write_archive(dir.path() / "ok.bin", a);
  const auto size = std::filesystem::file_size(dir.path() / "ok.bin");
  std::filesystem::resize_file(dir.path() / "ok.bin", size - 10);
  EXPECT_THROW(read_archive(dir.path() / "ok.bin"), Error);
}

TEST(Checkpoint, DetectorRoundTripAndShapeValidation) {
  testutil::TempDir dir("ckpt");
  Detector a;
  a.init(0.01, 3);
  a.save(dir.path() / "d.ckpt", {{"epoch", 4}});
  Detector b = Detector::load(dir.path() / "d.ckpt");
  const nn::ParamSet pa = a.all_params(), pb = b.all_params();
  ASSERT_EQ(pa.params().size(), pb.params().size());
  for (std::size_t i = 0; i < pa.params().size(); ++i)
    EXPECT_EQ(pa.params()[i].var->value.vec(), pb.params()[i].var->value.vec()) << pa.params()[i].name;
  EXPECT_EQ(read_archive(dir.path() / "d.ckpt").meta["epoch"], 4);

  // A checkpoint from a different width must not load into this detector.
  DetectorConfig wide = DetectorConfig::desk();
  wide.backbone.growth_rate = 12;
  Detector c(wide);
  EXPECT_THROW(c.load_archive(read_archive(dir.path() / "d.ckpt")), Error);
  EXPECT_THROW(Detector::load(dir.path() / "nope.ckpt"), Error);
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  const DetectorConfig lite = DetectorConfig::lite();
  nlohmann::json j = lite;
  const DetectorConfig back = j.get<DetectorConfig>();
  EXPECT_EQ(back.backbone.growth_rate, 32);
  EXPECT_EQ(back.backbone.block_layers, lite.backbone.block_layers);
  EXPECT_EQ(back.rgn.top_k, lite.rgn.top_k);
  EXPECT_EQ(back.pgn_decoder_channels, lite.pgn_decoder_channels);
}

TEST(Settings, PrecedenceAndKeys) {
  testutil::TempDir dir("cfg");
  std::ofstream(dir.path() / "run.cfg") << "# comment\nepochs = 12\nbase_lr=0.02  # trailing\n\ndelta_rgn = 0.9\n";
  RunSettings s;
  EXPECT_EQ(s.train.base_lr, kDeskBaseLr);
  auto kv = read_key_value_file(dir.path() / "run.cfg");
  EXPECT_EQ(kv.at("epochs"), "12");
  apply_settings(s, kv);
  EXPECT_EQ(s.train.epochs, 12);
  EXPECT_DOUBLE_EQ(s.train.base_lr, 0.02);
  EXPECT_DOUBLE_EQ(s.selector.delta_rgn, 0.9);
  apply_setting(s, "epochs", "3");  // command line after file
  EXPECT_EQ(s.train.epochs, 3);

  try {
    apply_setting(s, "bogus", "1");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bogus"), std::string::npos);
    for (const auto& k : settings_keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
  EXPECT_THROW(apply_setting(s, "epochs", "many"), ConfigError);
  EXPECT_THROW(apply_setting(s, "lambda1", "1.5"), ConfigError);
  std::ofstream(dir.path() / "bad.cfg") << "epochs 3\n";
  EXPECT_THROW(read_key_value_file(dir.path() / "bad.cfg"), ParseError);
}

TEST(Settings, ModelPresetAppliedFirst) {
  RunSettings s;
  apply_settings(s, {{"growth_rate", "16"}, {"model", "lite"}});
  EXPECT_EQ(s.model, "lite");
  EXPECT_EQ(s.detector.backbone.growth_rate, 16);
  EXPECT_EQ(s.detector.backbone.block_layers, BackboneConfig::lite().block_layers);
  const auto j = settings_json(s);
  EXPECT_EQ(j["model"], "lite");
}
