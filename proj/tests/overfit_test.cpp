#include <gtest/gtest.h>

#include "dsgd/dataset.hpp"
#include "dsgd/ggn.hpp"
#include "dsgd/settings.hpp"
#include "dsgd/trainer.hpp"

using namespace dsgd;

namespace {

constexpr int kSteps = 500;

struct Overfit {
  double first = 0;
  double last = 0;
  int steps = 0;
};

// Full-batch Adam at the desk learning rate. The sampling rng is reset every
// step so the objective itself stays fixed.
Overfit overfit(Detector& det, Head head, const std::vector<Sample>& batch, double stop_ratio) {
  TrainConfig c;
  nn::ParamSet ps = head_params(det, head);
  nn::init_weights(ps, {c.init_std, 0});
  Adam opt(ps, c);
  Overfit r;
  for (int k = 0; k < kSteps; ++k) {
    std::mt19937_64 rng(5);
    ps.zero_grad();
    const ag::Var loss = head_loss(det, head, batch, c, rng);
    r.last = loss->value[0];
    if (k == 0) r.first = r.last;
    r.steps = k + 1;
    if (r.last < stop_ratio * r.first) break;
    ag::backward(loss);
    opt.step(kDeskBaseLr);
  }
  return r;
}

std::vector<Sample> four_scenes() {
  std::mt19937_64 rng(1);
  std::vector<Sample> s;
  for (int i = 0; i < 4; ++i) s.push_back(make_synthetic_scene(rng, 64, 64, 1));
  return s;
}

}  // namespace

class HeadOverfit : public ::testing::TestWithParam<Head> {};

TEST_P(HeadOverfit, ReachesFivePercentOfInitialLoss) {
  Detector det;
  const Overfit r = overfit(det, GetParam(), four_scenes(), 0.05);
  EXPECT_LT(r.last, 0.05 * r.first) << head_name(GetParam()) << " " << r.first << " -> " << r.last;
  RecordProperty("steps", r.steps);
}

INSTANTIATE_TEST_SUITE_P(AllHeads, HeadOverfit, ::testing::Values(Head::Ggpn, Head::Gen, Head::Rgn, Head::Pgn),
                         [](const auto& info) { return std::string(head_name(info.param)); });

TEST(Overfit, GlobalGraspOnOneBar) {
  std::mt19937_64 rng(2);
  const Sample bar = make_family_scene(rng, 64, 64, ShapeFamily::Bar);
  Detector det;
  overfit(det, Head::Ggpn, {bar}, 0.0);
  const Detection d = det.detect(bar.image);
  EXPECT_TRUE(rectangle_match(d.ggn, bar.grasps));
}

TEST(Overfit, PixelPeakInsideSupport) {
  std::mt19937_64 rng(3);
  const Sample s = make_synthetic_scene(rng, 64, 64, 1);
  Detector det;
  overfit(det, Head::Pgn, {s}, 0.0);
  const Detection d = det.detect(s.image, true);
  const auto it = std::max_element(d.maps.xy.begin(), d.maps.xy.end());
  const std::size_t p = static_cast<std::size_t>(it - d.maps.xy.begin());
  EXPECT_TRUE(encode_pixel_targets(s).in_support(p));
}
