#include "dsgd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <spdlog/spdlog.h>

#include "dsgd/evaluator.hpp"

namespace dsgd {

namespace {

std::vector<const Image*> image_ptrs(std::span<const Sample> batch) {
  std::vector<const Image*> out;
  for (const auto& s : batch) out.push_back(&s.image);
  return out;
}

ag::Var ggpn_term(Detector& det, const ag::Var& features, std::span<const Sample> batch, double lambda1,
                  std::mt19937_64& rng) {
  const auto out = det.ggpn.forward(features, true);
  std::vector<std::array<double, 4>> targets;
  std::vector<int> bins;
  for (const auto& s : batch) {
    const GraspRect& g = ggpn_training_target(s, rng);
    targets.push_back(ggpn_target(g, s.image.width, s.image.height));
    bins.push_back(angle_to_bin(g.theta).index);
  }
  return ggpn_batch_loss(out, targets, bins, lambda1);
}

ag::Var pgn_term(Detector& det, const BackboneOutput& trunk, std::span<const Sample> batch) {
  const ag::Var raw = det.pgn.forward(trunk, true);
  std::vector<PixelTargets> targets;
  for (const auto& s : batch) targets.push_back(encode_pixel_targets(s));
  return pgn_batch_loss(raw, targets);
}

inline constexpr int kTrainProposals = 32;
inline constexpr double kGtJitter = 0.1;

ag::Var rgn_term(Detector& det, const ag::Var& features, std::span<const Sample> batch,
                 const LossConfig& loss, std::mt19937_64& rng) {
  const RgnConfig& rc = det.config().rgn;
  const int W = batch[0].image.width, H = batch[0].image.height;
  const auto s = det.srn.forward(features);
  const auto anchors = make_anchors(features->value.dim(2), features->value.dim(3), W, H, rc);
  std::vector<std::vector<AnchorTarget>> anchor_targets;
  for (const auto& smp : batch) {
    anchor_targets.push_back(label_anchors(anchors, smp, rc.anchor_batch, rng));
    if (std::none_of(anchor_targets.back().begin(), anchor_targets.back().end(),
                     [](const AnchorTarget& t) { return t.label >= 0; }))
      spdlog::warn("sample {}: no labeled anchors, salient-region term is zero", smp.id);
  }
  ag::Var total = srn_batch_loss(s, anchor_targets, W, H, loss.lambda2);

  std::vector<ag::RoiBox> rois;
  std::vector<RegionLossTarget> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<Box> boxes;
    for (const auto& p : srn_proposals(s, static_cast<int>(i), anchors, W, H, rc, kTrainProposals))
      boxes.push_back(p.first);
    for (const auto& b : jittered_gt_boxes(batch[i], kGtJitter, rng)) boxes.push_back(b);
    const RegionTargets rt = sample_regions(encode_region_targets(batch[i], boxes), rc.region_batch, rng);
    for (const Box& b : rt.boxes) rois.push_back(to_feature_roi(b, static_cast<int>(i)));
    for (auto& t : region_loss_targets(rt)) targets.push_back(std::move(t));
  }
  if (rois.empty()) return total;
  const auto r = det.rgpn.forward(roi_pool(features, rois, rc.roi_size), true);
  return ag::weighted_sum({total, rgpn_batch_loss(r, targets, loss.lambda3)}, {1, 1});
}

ag::Var gen_term(Detector& det, std::span<const Sample> batch, int per_sample, std::mt19937_64& rng) {
  std::vector<GenExample> ex;
  for (const auto& s : batch)
    for (auto& e : sample_gen_examples(s, per_sample, per_sample, rng)) ex.push_back(std::move(e));
  std::vector<const Image*> ptrs;
  std::vector<int> labels;
  for (const auto& e : ex) {
    ptrs.push_back(&e.image);
    labels.push_back(e.label);
  }
  const ag::Var z = det.gen.forward(ag::constant(image_batch(ptrs)), true);
  return gen_batch_loss(z, labels);
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) * 1000003ULL + 17;
}

}  // namespace

std::string_view head_name(Head h) {
  switch (h) {
    case Head::Ggpn: return "ggpn";
    case Head::Gen: return "gen";
    case Head::Rgn: return "rgn";
    case Head::Pgn: return "pgn";
    case Head::Joint: return "joint";
  }
  return "?";
}

Head parse_head(std::string_view name) {
  for (Head h : {Head::Ggpn, Head::Gen, Head::Rgn, Head::Pgn, Head::Joint})
    if (head_name(h) == name) return h;
  throw ConfigError("unknown head '" + std::string(name) + "' (expected ggpn, gen, rgn, pgn or joint)");
}

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.epochs = 150;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(base_lr > 0) || !(lr_drop > 0) || !(weight_decay >= 0) || !(init_std > 0))
    throw ConfigError("rates must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0))
    throw ConfigError("invalid Adam hyperparameters");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (gen_examples < 1) throw ConfigError("gen_examples must be >= 1");
  loss.validate();
}

double lr_at_epoch(int epoch, const TrainConfig& c) {
  if (epoch < 0 || epoch >= c.epochs)
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.epochs) + ")");
  const int first = static_cast<int>(std::ceil(0.5 * c.epochs));
  const int second = static_cast<int>(std::ceil(0.75 * c.epochs));
  double lr = c.base_lr;
  if (epoch >= first) lr /= c.lr_drop;
  if (epoch >= second) lr /= c.lr_drop;
  return lr;
}

Adam::Adam(nn::ParamSet params, const TrainConfig& c)
    : params_(std::move(params)), beta1_(c.beta1), beta2_(c.beta2), eps_(c.adam_eps), decay_(c.weight_decay) {
  for (const auto& p : params_.params()) {
    m_.emplace_back(p.var->value.shape());
    v_.emplace_back(p.var->value.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  const auto& ps = params_.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ag::Node& n = *ps[k].var;
    if (n.grad.empty()) n.ensure_grad();
    float* w = n.value.data();
    const float* g = n.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      const double gi = g[i] + decay_ * w[i];
      m[i] = static_cast<float>(beta1_ * m[i] + (1 - beta1_) * gi);
      v[i] = static_cast<float>(beta2_ * v[i] + (1 - beta2_) * gi * gi);
      w[i] -= static_cast<float>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
  }
}

void Adam::save_state(Archive& a) const {
  a.meta["adam_steps"] = t_;
  const auto& ps = params_.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    a.tensors.emplace_back("adam.m." + ps[k].name, m_[k]);
    a.tensors.emplace_back("adam.v." + ps[k].name, v_[k]);
  }
}

void Adam::load_state(const Archive& a) {
  t_ = a.meta.value("adam_steps", 0L);
  const auto& ps = params_.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const Tensor* m = a.find("adam.m." + ps[k].name);
    const Tensor* v = a.find("adam.v." + ps[k].name);
    if (!m || !v || !m->same_shape(m_[k]) || !v->same_shape(v_[k]))
      throw Error("checkpoint lacks optimizer state for " + ps[k].name);
    m_[k] = *m;
    v_[k] = *v;
  }
}

nn::ParamSet head_params(Detector& det, Head head) {
  switch (head) {
    case Head::Ggpn: return det.params({Part::Backbone, Part::Ggpn});
    case Head::Gen: return det.params({Part::Gen});
    case Head::Rgn: return det.params({Part::Backbone, Part::Srn, Part::Rgpn});
    case Head::Pgn: return det.params({Part::Backbone, Part::Pgn});
    case Head::Joint: return det.params({Part::Backbone, Part::Ggpn, Part::Srn, Part::Rgpn, Part::Pgn});
  }
  throw ConfigError("unknown head");
}

ag::Var head_loss(Detector& det, Head head, std::span<const Sample> batch, const TrainConfig& c,
                  std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("head_loss: empty batch");
  if (head == Head::Gen) return gen_term(det, batch, c.gen_examples, rng);
  const auto ptrs = image_ptrs(batch);
  const auto trunk = det.backbone.forward(ag::constant(image_batch(ptrs)), true);
  switch (head) {
    case Head::Ggpn: return ggpn_term(det, trunk.features, batch, c.loss.lambda1, rng);
    case Head::Rgn: return rgn_term(det, trunk.features, batch, c.loss, rng);
    case Head::Pgn: return pgn_term(det, trunk, batch);
    case Head::Joint:
      return ag::weighted_sum({ggpn_term(det, trunk.features, batch, c.loss.lambda1, rng),
                               rgn_term(det, trunk.features, batch, c.loss, rng), pgn_term(det, trunk, batch)},
                              {1, 1, 1});
    case Head::Gen: break;
  }
  throw ConfigError("unknown head");
}

double validation_metric(Detector& det, Head head, std::span<const Sample> val, std::uint64_t seed) {
  if (val.empty()) return -1;
  if (head == Head::Gen) {
    std::mt19937_64 rng(seed);
    std::size_t correct = 0, total = 0;
    for (const auto& s : val) {
      const auto ex = sample_gen_examples(s, 1, 1, rng);
      std::vector<GraspRect> rects;
      for (const auto& e : ex) rects.push_back(e.rect);
      const auto p = det.score_grasps(s.image, rects);
      for (std::size_t i = 0; i < ex.size(); ++i) {
        correct += (p[i] > 0.5) == (ex[i].label == 1);
        ++total;
      }
    }
    return total ? static_cast<double>(correct) / total : -1;
  }
  NetworkDetector nd(det);
  const EvalReport r = evaluate(nd, val);
  switch (head) {
    case Head::Ggpn: return r.ggn;
    case Head::Rgn: return r.rgn;
    case Head::Pgn: return r.pgn;
    default: return (r.ggn + r.rgn + r.pgn) / 3;
  }
}

TrainResult train_loop(Detector& det, Head head, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& c, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume) {
  c.validate();
  if (train.empty()) throw std::invalid_argument("train_loop: empty training set");
  std::filesystem::create_directories(out_dir);
  const std::string name(head_name(head));
  const nn::ParamSet params = head_params(det, head);
  Adam opt(params, c);
  TrainResult res;
  int start = 0;
  long step = 0;
  if (resume) {
    const Archive a = read_archive(*resume);
    if (a.meta.value("head", std::string()) != name)
      throw ConfigError(resume->string() + " is a " + a.meta.value("head", std::string("?")) +
                        " checkpoint, not " + name);
    det.load_archive(a);
    opt.load_state(a);
    start = a.meta.at("epoch").get<int>() + 1;
    step = a.meta.value("step", 0L);
    res.best_metric = a.meta.value("best_metric", -1.0);
    spdlog::info("resuming {} from epoch {}", name, start);
  } else {
    nn::init_weights(params, {c.init_std, c.seed});
  }

  auto save = [&](const std::filesystem::path& path, int epoch) {
    Archive a = det.to_archive();
    a.meta["head"] = name;
    a.meta["epoch"] = epoch;
    a.meta["step"] = step;
    a.meta["best_metric"] = res.best_metric;
    opt.save_state(a);
    write_archive(path, a);
  };

  std::ofstream log(out_dir / "metrics.jsonl", std::ios::app);
  std::vector<std::size_t> order(train.size());
  for (int epoch = start; epoch < c.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, c);
    std::mt19937_64 rng(epoch_seed(c.seed, epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0;
    int batches = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < order.size(); b += c.batch_size) {
      std::vector<Sample> batch;
      std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
      for (std::size_t k = b; k < std::min(order.size(), b + c.batch_size); ++k) {
        const Sample& s = train[order[k]];
        batch.push_back(c.augment ? augment_rotation(s, angle(rng)) : s);
      }
      params.zero_grad();
      const ag::Var loss = head_loss(det, head, batch, c, rng);
      const double value = loss->value[0];
      if (!std::isfinite(value)) {
        std::string ids;
        for (const auto& s : batch) ids += (ids.empty() ? "" : ",") + s.id;
        throw TrainingError("non-finite " + name + " loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(step) + " (lr " + std::to_string(lr) + ", batch " + ids + ")");
      }
      ag::backward(loss);
      opt.step(lr);
      ++step;
      sum += value;
      ++batches;
    }
    res.final_loss = sum / batches;
    res.epochs_run = epoch + 1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::ordered_json line{{"epoch", epoch}, {"step", step}, {"head", name}, {"loss", res.final_loss}, {"lr", lr}};
    const bool last = epoch + 1 == c.epochs;
    if (!val.empty() && ((epoch + 1) % c.checkpoint_every == 0 || last)) {
      const double metric = validation_metric(det, head, val, c.seed);
      line["val"] = metric;
      if (metric > res.best_metric) {
        res.best_metric = metric;
        res.best_checkpoint = out_dir / (name + "-best.ckpt");
        save(*res.best_checkpoint, epoch);
      }
    }
    log << line.dump() << '\n' << std::flush;
    spdlog::info("{} epoch {}/{} loss {:.4f} lr {:g} ({:.1f}s)", name, epoch + 1, c.epochs, res.final_loss, lr, secs);
    if ((epoch + 1) % c.checkpoint_every == 0 || last) {
      res.last_checkpoint = out_dir / (name + "-" + std::to_string(epoch) + ".ckpt");
      save(res.last_checkpoint, epoch);
    }
  }
  return res;
}

}  // namespace dsgd
