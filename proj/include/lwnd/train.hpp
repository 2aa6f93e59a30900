#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lwnd/dataset.hpp"
#include "lwnd/lsq.hpp"
#include "lwnd/model.hpp"
#include "lwnd/nn/adam.hpp"

namespace lwnd {

struct TrainHyper {
  int epochs = 20;
  int batch_size = 512;
  nn::AdamConfig adam;
  /// Epochs without validation improvement before stopping (final stage only).
  int patience = 5;
  /// Learning rate decays linearly to lr * final_lr_fraction over each stage.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 1;
  /// <= 0 selects the per-layer default 1/sqrt(N_w).
  double step_size_grad_scale = 0.0;
  bool deterministic = false;
};

struct EpochRecord {
  int epoch = 0;
  lsq::QuantStage stage = lsq::QuantStage::FullPrecision;
  double loss = 0;
  double train_accuracy = 0;
  double val_accuracy = 0;
  double seconds = 0;

  /// Equality ignoring wall time.
  bool same_result(const EpochRecord& o) const {
    return epoch == o.epoch && stage == o.stage && loss == o.loss && train_accuracy == o.train_accuracy &&
           val_accuracy == o.val_accuracy;
  }
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0;
  double wall_seconds = 0;

  bool same_result(const TrainReport& o) const;
  std::string to_text() const;
};

struct TrainResult {
  ModelF model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains and returns the best-validation checkpoint of the last stage
/// reached. With a schedule, epoch counts come from the schedule and the
/// model passes through fp -> weights -> full; without one the model trains
/// in its current stage for hyper.epochs.
TrainResult train(ModelF model, const Dataset& train_set, const Dataset& val_set, const TrainHyper& hyper,
                  const std::optional<lsq::QuantSchedule>& schedule = std::nullopt,
                  const EpochCallback& on_epoch = {});

}  // namespace lwnd
