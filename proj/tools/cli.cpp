// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvitac/checkpoint.hpp"
#include "mvitac/config.hpp"
#include "mvitac/dataset.hpp"
#include "mvitac/error.hpp"
#include "mvitac/probe.hpp"
#include "mvitac/synth.hpp"
#include "mvitac/train.hpp"

namespace mvitac::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Dotted leaf flags (--train.lr ...) plus short aliases (--tau ...).
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> leaves;
  std::vector<std::tuple<std::string, std::string, CLI::Option*>> aliases;

  void add_leaves(CLI::App& cmd, const std::vector<std::string>& prefixes) {
    cmd.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    for (const auto& path : config_leaf_paths()) {
      bool wanted = prefixes.empty();
      for (const auto& p : prefixes) wanted = wanted || path == p || path.starts_with(p + ".");
      if (!wanted) continue;
      leaves.emplace_back(path, cmd.add_option("--" + path, values[path]));
    }
  }

  void add_alias(CLI::App& cmd, const std::string& flag, const std::string& path, const std::string& help) {
    aliases.emplace_back(path, flag, cmd.add_option("--" + flag, values["alias:" + flag], help));
  }

  // File values first, then dotted flags, then aliases.
  json resolve() const {
    json j = config_path.empty() ? json(RunConfig{}) : json(load_run_config(config_path));
    for (const auto& [path, opt] : leaves) {
      if (opt->count() > 0) apply_override(j, path, values.at(path));
    }
    for (const auto& [path, flag, opt] : aliases) {
      if (opt->count() > 0) apply_override(j, path, values.at("alias:" + flag));
    }
    return j;
  }
};

std::string format_row(const Tensor& t, std::size_t row) {
  std::string s;
  char buf[32];
  const std::size_t d = t.dim(1);
  for (std::size_t j = 0; j < d; ++j) {
    std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(t.data()[row * d + j]));
    s += buf;
  }
  return s;
}

// Evaluation geometry and normalization recorded at pretraining time. Bare
// checkpoints fall back to a center crop at the encoder input size and
// statistics from the training split.
AugmentationConfig augment_for(const Checkpoint& ck, const PairedDataset& dataset,
                               std::span<const std::size_t> train) {
  AugmentationConfig aug;
  if (ck.metadata.contains("augment")) {
    aug = ck.metadata.at("augment").get<AugmentationConfig>();
  } else {
    aug.crop_to = ck.config.visual.input_size;
    aug.resize_to = aug.crop_to + aug.crop_to / 8;
  }
  aug.grasp_mode = dataset.layout == Layout::grasp;
  if (aug.visual_norm.empty()) aug.visual_norm = compute_normalization(dataset, Modality::visual, train);
  if (aug.tactile_norm.empty()) aug.tactile_norm = compute_normalization(dataset, Modality::tactile, train);
  return aug;
}

int cmd_synth(SynthSpec spec, const std::string& out_dir, std::ostream& out) {
  spec.validate();
  const PairedDataset ds = synth_generate(spec);
  export_pair_dataset(ds, out_dir);
  out << "wrote " << ds.samples.size() << " pairs to " << out_dir << '\n';
  return kExitOk;
}

int cmd_pretrain(const json& resolved, std::ostream& out) {
  RunConfig rc = run_config_from_json(resolved);
  rc.train.validate();
  if (rc.data.empty()) throw ConfigError("pretrain: --data is required");
  if (rc.out.empty()) throw ConfigError("pretrain: --out is required");

  const PairedDataset ds = load_dataset(rc.data);
  if (ds.layout == Layout::grasp) {
    rc.model.tactile.in_channels = ds.tactile_channels();
    rc.augment.grasp_mode = true;
  }
  rc.augment.validate();
  rc.model.validate();
  if (rc.model.visual.input_size != rc.augment.crop_to) {
    throw ConfigError("model input_size " + std::to_string(rc.model.visual.input_size) +
                      " does not match augment.crop_to " + std::to_string(rc.augment.crop_to));
  }

  const auto train = split_indices(ds, Split::train, rc.seed);
  if (rc.augment.visual_norm.empty()) rc.augment.visual_norm = compute_normalization(ds, Modality::visual, train);
  if (rc.augment.tactile_norm.empty()) rc.augment.tactile_norm = compute_normalization(ds, Modality::tactile, train);

  const fs::path dir = rc.out;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "resolved_config.json");
    f << json(rc).dump(2) << '\n';
    if (!f) throw ConfigError("cannot write " + (dir / "resolved_config.json").string());
  }

  MViTacModel model(rc.model, rc.seed);
  const PretrainResult result = pretrain(model, ds, train, rc.augment, rc.train, dir);
  result.log.write(dir / "metrics.csv", dir / "epoch_metrics.csv");
  const auto& last = result.log.epochs.back();
  out << "pretrained " << result.steps << " steps on " << train.size() << " pairs; final epoch l_mm " << last.mean.l_mm
      << "\ncheckpoint: " << result.final_checkpoint.string() << '\n';
  return kExitOk;
}

int cmd_probe(const json& resolved, const std::string& checkpoint, const std::string& task_name,
              const std::string& modality, const std::string& out_dir, std::ostream& out) {
  const RunConfig rc = run_config_from_json(resolved);
  const Task task = parse_task(task_name);
  ProbeConfig pc = rc.probe;
  pc.input = parse_probe_input(modality);
  pc.validate();
  if (rc.data.empty()) throw ConfigError("probe: --data is required");

  const PairedDataset ds = load_dataset(rc.data);
  if ((task == Task::grasp) != (ds.layout == Layout::grasp)) {
    throw ConfigError("task " + task_name + " does not match the " + to_string(ds.layout) + " layout of " + rc.data);
  }
  const Checkpoint ck = read_checkpoint(checkpoint);
  const MViTacModel model = model_from_checkpoint(ck);
  const auto train = split_indices(ds, Split::train, rc.seed);
  const auto test = split_indices(ds, Split::test, rc.seed);
  const AugmentationConfig aug = augment_for(ck, ds, train);
  pc.class_count = class_count(ds, task);

  const ProbeResult r = linear_probe_train(model, ds, train, test, task, aug, pc);

  const fs::path dir = out_dir;
  fs::create_directories(dir);
  const fs::path eval = dir / "eval.csv";
  const bool fresh = !fs::exists(eval);
  std::ofstream f(eval, std::ios::app);
  if (fresh) f << "task,modality,accuracy,n\n";
  char acc[32];
  std::snprintf(acc, sizeof acc, "%.6f", r.test.accuracy);
  f << task_name << ',' << modality << ',' << acc << ',' << r.test.n << '\n';
  if (!f) throw ConfigError("cannot write " + eval.string());
  r.classifier.save(dir / ("classifier_" + task_name + "_" + modality + ".json"));
  out << task_name << ' ' << modality << " accuracy " << acc << " (n=" << r.test.n << ")\n";
  return kExitOk;
}

int cmd_export(const std::string& checkpoint, const std::string& data, const std::string& space_name,
               const std::string& out_path, std::uint64_t seed, std::ostream& out) {
  const EmbeddingSpace space = parse_embedding_space(space_name);
  const PairedDataset ds = load_dataset(data);
  const Checkpoint ck = read_checkpoint(checkpoint);
  const MViTacModel model = model_from_checkpoint(ck);
  const auto aug = augment_for(ck, ds, split_indices(ds, Split::train, seed));
  std::vector<std::size_t> all(ds.samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor v = embed(model, ds, all, aug, Modality::visual, space);
  const Tensor t = embed(model, ds, all, aug, Modality::tactile, space);

  std::ofstream f(out_path);
  if (!f) throw ConfigError("cannot write " + out_path);
  f << "stem,modality";
  for (std::size_t j = 0; j < v.dim(1); ++j) f << ",e" << j;
  f << '\n';
  for (std::size_t i = 0; i < all.size(); ++i) {
    f << ds.samples[i].stem << ",visual" << format_row(v, i) << '\n';
    f << ds.samples[i].stem << ",tactile" << format_row(t, i) << '\n';
  }
  if (!f) throw ConfigError("failed writing " + out_path);
  out << "wrote " << 2 * all.size() << " " << to_string(space) << " embeddings to " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visuo-tactile contrastive pretraining and linear probing"};
  app.require_subcommand(1);

  SynthSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset in the pair layout");
  synth->add_option("--classes", spec.class_count);
  synth->add_option("--per-class", spec.samples_per_class);
  synth->add_option("--size", spec.image_size);
  synth->add_option("--noise", spec.noise_std);
  synth->add_option("--test-fraction", spec.test_fraction);
  synth->add_option("--seed", spec.seed);
  synth->add_option("--out", synth_out)->required();

  Overrides pre;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pre.add_leaves(*pretrain_cmd, {});
  pre.add_alias(*pretrain_cmd, "tau", "train.loss.tau", "InfoNCE temperature");
  pre.add_alias(*pretrain_cmd, "lambda-inter", "train.loss.lambda_inter", "weight of the cross-modal terms");
  pre.add_alias(*pretrain_cmd, "momentum", "train.momentum", "momentum coefficient m");
  pre.add_alias(*pretrain_cmd, "epochs", "train.epochs", "pretraining epochs");
  pre.add_alias(*pretrain_cmd, "batch-size", "train.batch_size", "pretraining batch size");

  Overrides probe_ov;
  std::string probe_ckpt, task = "category", modality = "both", probe_out = ".";
  auto* probe = app.add_subcommand("probe", "Linear probe on frozen backbone features");
  probe_ov.add_leaves(*probe, {"probe", "seed", "data"});
  probe->add_option("--checkpoint", probe_ckpt)->required();
  probe->add_option("--task", task, "category|hardsoft|roughsmooth|grasp");
  probe->add_option("--modality", modality, "tactile|both");
  probe->add_option("--out", probe_out, "directory for eval.csv and the classifier");

  std::string ex_ckpt, ex_data, ex_space = "inter", ex_out;
  std::uint64_t ex_seed = 0;
  auto* ex = app.add_subcommand("export-embeddings", "Write per-sample embeddings as CSV");
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--space", ex_space, "backbone|intra|inter");
  ex->add_option("--out", ex_out, "output CSV path")->required();
  ex->add_option("--seed", ex_seed, "split seed for normalization fallback");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (synth->parsed()) return cmd_synth(spec, synth_out, out);
    if (pretrain_cmd->parsed()) return cmd_pretrain(pre.resolve(), out);
    if (probe->parsed()) return cmd_probe(probe_ov.resolve(), probe_ckpt, task, modality, probe_out, out);
    if (ex->parsed()) return cmd_export(ex_ckpt, ex_data, ex_space, ex_out, ex_seed, out);
  } catch (const DivergedTrainingError& e) {
    err << "mvitac: " << e.what() << '\n';
    err << "last good checkpoint: "
        << (e.last_good_checkpoint().empty() ? "none (diverged before the first epoch finished)"
                                             : e.last_good_checkpoint())
        << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "mvitac: error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace mvitac::cli
