// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvitac/augment.hpp"
#include "mvitac/dataset.hpp"
#include "mvitac/losses.hpp"
#include "mvitac/model.hpp"
#include "mvitac/optim.hpp"

namespace mvitac {

// Desk-scale defaults. The encoder has no normalization layers, so the full-scale
// 0.03 inflates backbone activations by orders of magnitude over 30 epochs;
// 0.003 keeps them O(10). paper_scale profiles restore 0.03.
struct TrainConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double momentum = 0.99;
  std::uint64_t seed = 0;
  LossWeights loss;

  AdamConfig adam() const { return {lr, beta1, beta2, epsilon}; }
  void validate() const;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown mean;
  std::optional<double> accuracy;
};

struct MetricsLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  // Header: step,epoch,l_vv,l_tt,l_vt,l_tv,l_mm
  std::string steps_csv() const;
  // Header: epoch,l_vv,l_tt,l_vt,l_tv,l_mm,accuracy
  std::string epochs_csv() const;
  void write(const std::filesystem::path& metrics_csv, const std::filesystem::path& epoch_csv = {}) const;
};

// Optional observers. `on_phase` is called with "optimizer" after each Adam
// step and "momentum" after each momentum update.
struct PretrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::string_view phase, const MViTacModel&)> on_phase;
};

struct PretrainResult {
  MetricsLog log;
  std::filesystem::path final_checkpoint;  // empty when no checkpoint_dir was given
  std::uint64_t steps = 0;
};

// Self-supervised pretraining. Per step: batch -> four augmented views ->
// forward_views -> combined loss -> backward -> Adam on query parameters ->
// momentum update. Writes `last.ckpt` after every epoch and `final.ckpt` at the
// end when `checkpoint_dir` is non-empty. `augment` must carry normalization
// statistics. Throws DivergedTrainingError (with the last good checkpoint) on a
// non-finite loss, gradient or collapsed embedding.
PretrainResult pretrain(MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> train_indices,
                        const AugmentationConfig& augment, const TrainConfig& config,
                        const std::filesystem::path& checkpoint_dir = {}, const PretrainHooks& hooks = {});

// Runs one training step on a prepared view batch. Exposed for tests.
LossBreakdown pretrain_step(MViTacModel& model, Adam& optimizer, const ViewBatch& views, const TrainConfig& config);

}  // namespace mvitac
