// SPDX-License-Identifier: Apache-2.0

#include "mvitac/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mvitac/checkpoint.hpp"
#include "mvitac/config.hpp"
#include "mvitac/error.hpp"
#include "mvitac/rng.hpp"

namespace fs = std::filesystem;

namespace mvitac {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5f;
constexpr std::uint64_t kAugmentTag = 0xa7;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string loss_fields(const LossBreakdown& l) {
  return fmt(l.l_vv) + "," + fmt(l.l_tt) + "," + fmt(l.l_vt) + "," + fmt(l.l_tv) + "," + fmt(l.l_mm);
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.l_vv) && std::isfinite(l.l_tt) && std::isfinite(l.l_vt) && std::isfinite(l.l_tv) &&
         std::isfinite(l.l_mm);
}

}  // namespace

void TrainConfig::validate() const {
  adam().validate();
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("train: momentum must be in [0,1]");
  loss.validate();
}

std::string MetricsLog::steps_csv() const {
  std::string out = "step,epoch,l_vv,l_tt,l_vt,l_tv,l_mm\n";
  for (const auto& s : steps) out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + loss_fields(s.loss) + "\n";
  return out;
}

std::string MetricsLog::epochs_csv() const {
  std::string out = "epoch,l_vv,l_tt,l_vt,l_tv,l_mm,accuracy\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + loss_fields(e.mean) + "," + (e.accuracy ? fmt(*e.accuracy) : "") + "\n";
  }
  return out;
}

void MetricsLog::write(const fs::path& metrics_csv, const fs::path& epoch_csv) const {
  std::ofstream f(metrics_csv, std::ios::binary);
  f << steps_csv();
  if (!f) throw Error("cannot write " + metrics_csv.string());
  if (!epoch_csv.empty()) {
    std::ofstream e(epoch_csv, std::ios::binary);
    e << epochs_csv();
    if (!e) throw Error("cannot write " + epoch_csv.string());
  }
}

namespace {

LossBreakdown run_step(MViTacModel& model, Adam& optimizer, const ViewBatch& views, const TrainConfig& config,
                       const PretrainHooks* hooks) {
  Tape tape;
  const EmbeddingSet z = model.forward_views(views, &tape);
  const CombinedLoss loss = combined_loss(z, config.loss, &tape);
  if (!finite(loss.parts) || !std::isfinite(static_cast<double>(loss.total.item()))) {
    throw DivergedTrainingError("non-finite loss (l_mm = " + fmt(loss.parts.l_mm) + ")");
  }
  optimizer.zero_grad();
  tape.backward(loss.total);
  optimizer.step();
  if (hooks && hooks->on_phase) hooks->on_phase("optimizer", model);
  model.momentum_update(config.momentum);
  if (hooks && hooks->on_phase) hooks->on_phase("momentum", model);
  return loss.parts;
}

}  // namespace

LossBreakdown pretrain_step(MViTacModel& model, Adam& optimizer, const ViewBatch& views, const TrainConfig& config) {
  return run_step(model, optimizer, views, config, nullptr);
}

PretrainResult pretrain(MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> train_indices,
                        const AugmentationConfig& augment, const TrainConfig& config, const fs::path& checkpoint_dir,
                        const PretrainHooks& hooks) {
  config.validate();
  augment.validate();
  if (train_indices.empty()) throw ConfigError("pretrain: empty training set");
  if (train_indices.size() < config.batch_size) {
    throw ConfigError("pretrain: " + std::to_string(train_indices.size()) + " training samples cannot fill a batch of " +
                      std::to_string(config.batch_size));
  }

  const Batcher batcher(train_indices.size(), config.batch_size, derive_seed(config.seed, {kShuffleTag}), true);
  Adam optimizer(model.query_parameters(), config.adam());
  const nlohmann::json metadata = {{"augment", augment}, {"train", config}, {"layout", to_string(dataset.layout)}};
  const nlohmann::json seeds = {{"train", config.seed}};

  PretrainResult result;
  fs::path last_good;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    LossBreakdown sum;
    std::size_t count = 0;
    for (const auto& batch : batcher.epoch(epoch)) {
      std::vector<std::size_t> indices;
      indices.reserve(batch.size());
      for (std::size_t b : batch) indices.push_back(train_indices[b]);
      const ViewBatch views =
          make_view_batch(dataset, indices, augment, derive_seed(config.seed, {kAugmentTag}), epoch);
      LossBreakdown parts;
      try {
        parts = run_step(model, optimizer, views, config, &hooks);
      } catch (const DegenerateEmbeddingError& e) {
        throw DivergedTrainingError(std::string("training diverged: ") + e.what(), last_good.string());
      } catch (const DivergedTrainingError& e) {
        throw DivergedTrainingError(std::string("training diverged: ") + e.what(), last_good.string());
      }
      ++step;
      StepRecord rec{step, epoch + 1, parts};
      result.log.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      sum.l_vv += parts.l_vv;
      sum.l_tt += parts.l_tt;
      sum.l_vt += parts.l_vt;
      sum.l_tv += parts.l_tv;
      sum.l_mm += parts.l_mm;
      ++count;
    }
    const double inv = 1.0 / static_cast<double>(count);
    EpochRecord er;
    er.epoch = epoch + 1;
    er.mean = {sum.l_vv * inv, sum.l_tt * inv, sum.l_vt * inv, sum.l_tv * inv, sum.l_mm * inv};
    result.log.epochs.push_back(er);
    if (!checkpoint_dir.empty()) {
      last_good = checkpoint_dir / "last.ckpt";
      save_checkpoint(make_checkpoint(model, step, seeds, metadata), last_good);
    }
  }
  result.steps = step;
  if (!checkpoint_dir.empty()) {
    result.final_checkpoint = checkpoint_dir / "final.ckpt";
    save_checkpoint(make_checkpoint(model, step, seeds, metadata), result.final_checkpoint);
  }
  return result;
}

}  // namespace mvitac
