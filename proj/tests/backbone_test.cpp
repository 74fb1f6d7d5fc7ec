#include <gtest/gtest.h>

#include <random>

#include "dsgd/backbone.hpp"
#include "dsgd/error.hpp"

using namespace dsgd;

namespace {

Tensor random_input(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Tensor t({n, 3, h, w});
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

void init(nn::DenseBlock& b, std::uint64_t seed) {
  nn::ParamSet ps;
  b.collect(ps, "b", false);
  nn::init_weights(ps, {0.01, seed});
}

void init(Backbone& b, std::uint64_t seed) {
  nn::ParamSet ps;
  b.collect(ps, "trunk");
  nn::init_weights(ps, {0.01, seed});
}

}  // namespace

TEST(DenseBlock, ChannelArithmetic) {
  EXPECT_EQ(nn::DenseBlock(64, 6, 32).out_channels(), 256);
  nn::DenseBlock one(5, 1, 3);
  init(one, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor x({2, 5, 4, 4});
  for (auto& v : x.vec()) v = u(rng);
  const Tensor y = one.forward(ag::constant(x), false)->value;
  EXPECT_EQ(y.shape(), (std::vector<int>{2, 8, 4, 4}));
}

TEST(DenseBlock, PreservesInputChannels) {
  nn::DenseBlock b(6, 3, 4);
  init(b, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor x({2, 6, 5, 5});
  for (auto& v : x.vec()) v = u(rng);
  const Tensor y = b.forward(ag::constant(x), false)->value;
  ASSERT_EQ(y.dim(1), 6 + 3 * 4);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < 25; ++i) EXPECT_EQ(y.at(n, c, i / 5, i % 5), x.at(n, c, i / 5, i % 5));
}

TEST(Backbone, ChannelCountsFromConfig) {
  // Hand-computed: stem, then block (+layers * growth), transition (x0.5).
  const BackboneConfig desk = BackboneConfig::desk();
  EXPECT_EQ(desk.block_out(0), 32);
  EXPECT_EQ(desk.transition_out(0), 16);
  EXPECT_EQ(desk.block_out(1), 48);
  EXPECT_EQ(desk.transition_out(1), 24);
  EXPECT_EQ(desk.output_channels(), 56);
  const BackboneConfig lite = BackboneConfig::lite();
  EXPECT_EQ(lite.growth_rate, 32);
  EXPECT_EQ(lite.output_channels(), 1024);
}

TEST(Backbone, StrideAndShapes) {
  Backbone b(BackboneConfig::desk());
  init(b, 5);
  const BackboneOutput out = b.forward(ag::constant(random_input(1, 224, 224, 6)), false);
  EXPECT_EQ(out.features->value.shape(), (std::vector<int>{1, 56, 14, 14}));
  EXPECT_EQ(out.stem->value.shape(), (std::vector<int>{1, 16, 56, 56}));
  const BackboneOutput rect = b.forward(ag::constant(random_input(2, 64, 96, 7)), false);
  EXPECT_EQ(rect.features->value.shape(), (std::vector<int>{2, 56, 4, 6}));
}

TEST(Backbone, LiteConstructsAndRuns) {
  Backbone b(BackboneConfig::lite());
  init(b, 8);
  const BackboneOutput out = b.forward(ag::constant(random_input(1, 32, 32, 9)), false);
  EXPECT_EQ(out.features->value.shape(), (std::vector<int>{1, 1024, 2, 2}));
}

TEST(Backbone, RejectsIndivisibleInput) {
  Backbone b(BackboneConfig::desk());
  try {
    b.forward(ag::constant(random_input(1, 60, 64, 1)), false);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
}

TEST(Backbone, InvalidConfigRejected) {
  BackboneConfig c;
  c.growth_rate = 0;
  EXPECT_THROW(Backbone{c}, ConfigError);
  c = BackboneConfig{};
  c.block_layers[1] = 0;
  EXPECT_THROW(Backbone{c}, ConfigError);
}

TEST(Backbone, InferenceIsDeterministic) {
  Backbone b(BackboneConfig::desk());
  init(b, 10);
  const Tensor x = random_input(2, 64, 64, 11);
  const Tensor a = b.forward(ag::constant(x), false).features->value;
  const Tensor c = b.forward(ag::constant(x), false).features->value;
  EXPECT_EQ(a.vec(), c.vec());
}

TEST(Backbone, EveryPixelReachesFeatures) {
  Backbone b(BackboneConfig::desk());
  init(b, 12);
  const Tensor x = random_input(1, 64, 64, 13);
  const Tensor base = b.forward(ag::constant(x), false).features->value;
  std::mt19937_64 rng(14);
  for (int k = 0; k < 8; ++k) {
    Tensor z = x;
    const int py = static_cast<int>(rng() % 64), px = static_cast<int>(rng() % 64);
    for (int c = 0; c < 3; ++c) z.at(0, c, py, px) = 0.9f;
    const Tensor out = b.forward(ag::constant(z), false).features->value;
    EXPECT_NE(out.vec(), base.vec()) << "pixel " << px << "," << py;
  }
}
