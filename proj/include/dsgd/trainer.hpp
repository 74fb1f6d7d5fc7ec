#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsgd/dataset.hpp"
#include "dsgd/detector.hpp"
#include "dsgd/losses.hpp"

namespace dsgd {

/// Which objective a training run optimizes. `Joint` sums the GGPN, RGN and
/// PGN objectives over one shared trunk pass.
enum class Head { Ggpn, Gen, Rgn, Pgn, Joint };
std::string_view head_name(Head h);
/// Throws ConfigError for an unknown name.
Head parse_head(std::string_view name);

struct TrainConfig {
  int epochs = 30;
  double base_lr = 0.01;
  double lr_drop = 10;
  double weight_decay = 5e-4;
  double init_std = 0.01;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 5;
  double val_fraction = 0.1;
  bool augment = true;
  /// Positive and negative grasp images drawn per sample for GEN.
  int gen_examples = 2;
  LossConfig loss;

  /// Full-length schedule: 150 epochs at base lr 0.01, otherwise the defaults.
  static TrainConfig full();
  void validate() const;
};

/// base_lr, divided by lr_drop from epoch ceil(0.5 * epochs) and again from
/// ceil(0.75 * epochs). Throws std::out_of_range outside [0, epochs).
double lr_at_epoch(int epoch, const TrainConfig& config);

/// Adam with L2 weight decay added to every parameter's gradient.
class Adam {
 public:
  Adam(nn::ParamSet params, const TrainConfig& config);
  void step(double lr);
  long steps() const { return t_; }
  void save_state(Archive& a) const;
  void load_state(const Archive& a);

 private:
  nn::ParamSet params_;
  double beta1_, beta2_, eps_, decay_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Parameters a head's objective updates.
nn::ParamSet head_params(Detector& det, Head head);

/// Objective of `head` on one batch in training mode. Random choices
/// (anchor and region sampling, GEN negatives, tie-breaks) draw from `rng`.
ag::Var head_loss(Detector& det, Head head, std::span<const Sample> batch, const TrainConfig& config,
                  std::mt19937_64& rng);

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  int epochs_run = 0;
  double final_loss = 0;
  std::filesystem::path last_checkpoint;
  std::optional<std::filesystem::path> best_checkpoint;
  double best_metric = -1;
};

/// Validation score used for best-checkpoint selection: branch accuracy for
/// GGPN / RGN / PGN, their mean for Joint, classification accuracy for GEN.
double validation_metric(Detector& det, Head head, std::span<const Sample> val, std::uint64_t seed);

/// Runs epochs [start, config.epochs). Appends {epoch, step, head, loss, lr}
/// lines to `out_dir/metrics.jsonl` and writes `<head>-<epoch>.ckpt` every
/// checkpoint_every epochs, at the final epoch and `<head>-best.ckpt` on a
/// new best validation score. With `resume`, restores weights, optimizer
/// state and the epoch counter from that checkpoint. Throws TrainingError on
/// a non-finite loss.
TrainResult train_loop(Detector& det, Head head, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& config, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace dsgd
