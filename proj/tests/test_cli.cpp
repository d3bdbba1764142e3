// SPDX-License-Identifier: Apache-2.0

// Subcommands run in-process against a small synthetic dataset.

#include <doctest.h>
#include <unistd.h>

#include <sys/stat.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "mvitac/checkpoint.hpp"
#include "mvitac/config.hpp"
#include "mvitac/dataset.hpp"
#include "mvitac/probe.hpp"

using namespace mvitac;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "mvitac");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

std::size_t count_png(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".png";
  return n;
}

// A dataset plus a one-epoch checkpoint shared by the test cases below.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "mvitac_test_cli";
  fs::path data = root / "data";
  fs::path run_dir = root / "run";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(run({"synth", "--classes", "4", "--per-class", "10", "--size", "16", "--seed", "2", "--out", data.string()})
                .code == cli::kExitOk);
  }

  std::vector<std::string> pretrain_args(const fs::path& out) const {
    return {"pretrain", "--data", data.string(), "--out", out.string(), "--epochs", "1", "--batch-size", "8",
            "--augment.resize_to", "18", "--augment.crop_to", "16", "--model.visual.input_size", "16",
            "--model.tactile.input_size", "16", "--model.embed_dim", "8"};
  }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("synth writes the pair layout") {
  const fs::path out = workspace().root / "synth20";
  const auto r = run({"synth", "--classes", "2", "--per-class", "10", "--size", "8", "--out", out.string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(count_png(out / "visual") == 20);
  CHECK(count_png(out / "tactile") == 20);
  CHECK(lines(out / "labels.csv").size() == 21);
  const auto split = lines(out / "split.csv");
  CHECK(split.size() == 21);
  std::size_t test = 0;
  for (const auto& l : split) test += l.ends_with(",test");
  CHECK(test == 4);
}

TEST_CASE("synth default flags give 512 pairs") {
  const fs::path out = workspace().root / "synth_default";
  REQUIRE(run({"synth", "--out", out.string()}).code == cli::kExitOk);
  CHECK(count_png(out / "visual") == 512);
  CHECK(count_png(out / "tactile") == 512);
  const PairedDataset ds = load_dataset(out);
  CHECK(split_indices(ds, Split::test, 0).size() == 4 * 26);
}

TEST_CASE("synth into an unwritable location exits 2") {
  const fs::path blocker = workspace().root / "blocker";
  std::ofstream(blocker) << "x";
  auto r = run({"synth", "--classes", "2", "--per-class", "2", "--out", (blocker / "sub").string()});
  CHECK(r.code == cli::kExitInput);
  CHECK_FALSE(r.err.empty());
  if (::geteuid() != 0) {
    // Permission bits are not enforced for root.
    const fs::path ro = workspace().root / "readonly";
    fs::create_directories(ro);
    ::chmod(ro.c_str(), 0555);
    r = run({"synth", "--classes", "2", "--per-class", "2", "--out", (ro / "sub").string()});
    CHECK(r.code == cli::kExitInput);
    ::chmod(ro.c_str(), 0755);
  }
}

TEST_CASE("pretrain writes outputs and is reproducible") {
  const auto& w = workspace();
  const fs::path a = w.root / "pre_a", b = w.root / "pre_b";
  const auto before = slurp(w.data / "labels.csv");
  REQUIRE(run(w.pretrain_args(a)).code == cli::kExitOk);
  REQUIRE(run(w.pretrain_args(b)).code == cli::kExitOk);
  for (const char* f : {"final.ckpt", "last.ckpt", "metrics.csv", "epoch_metrics.csv", "resolved_config.json"})
    CHECK(fs::exists(a / f));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(lines(a / "metrics.csv").front() == "step,epoch,l_vv,l_tt,l_vt,l_tv,l_mm");
  CHECK(slurp(w.data / "labels.csv") == before);

  // The resolved config alone reproduces the run.
  const fs::path c = w.root / "pre_c";
  REQUIRE(run({"pretrain", "--config", (a / "resolved_config.json").string(), "--out", c.string()}).code ==
          cli::kExitOk);
  CHECK(slurp(c / "metrics.csv") == slurp(a / "metrics.csv"));
  const auto cfg = nlohmann::json::parse(slurp(a / "resolved_config.json"));
  CHECK(cfg["train"]["epochs"] == 1);
  CHECK(cfg["model"]["embed_dim"] == 8);
}

TEST_CASE("pretrain input errors exit 2") {
  const auto& w = workspace();
  auto args = w.pretrain_args(w.root / "pre_bad");
  args.insert(args.end(), {"--tau", "0"});
  CHECK(run(args).code == cli::kExitInput);
  CHECK(run({"pretrain", "--data", (w.root / "nowhere").string(), "--out", (w.root / "x").string()}).code ==
        cli::kExitInput);
  args = w.pretrain_args(w.root / "pre_bad");
  args.insert(args.end(), {"--train.bogus", "1"});
  CHECK(run(args).code == cli::kExitInput);
  args = w.pretrain_args(w.root / "pre_bad");
  args.insert(args.end(), {"--train.epochs", "many"});
  CHECK(run(args).code == cli::kExitInput);
  CHECK(run({"frobnicate"}).code == cli::kExitInput);
}

TEST_CASE("probe appends eval rows and saves classifiers") {
  const auto& w = workspace();
  const fs::path pre = w.root / "pre_probe", out = w.root / "probe_out";
  REQUIRE(run(w.pretrain_args(pre)).code == cli::kExitOk);
  const auto ckpt = (pre / "final.ckpt").string();
  for (const char* modality : {"tactile", "both"}) {
    const auto r = run({"probe", "--checkpoint", ckpt, "--data", w.data.string(), "--modality", modality, "--out",
                        out.string(), "--probe.epochs", "2"});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(out / (std::string("classifier_category_") + modality + ".json")));
  }
  const auto rows = lines(out / "eval.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "task,modality,accuracy,n");
  CHECK(rows[1].starts_with("category,tactile,"));
  CHECK(rows[2].starts_with("category,both,"));
  CHECK(rows[1].ends_with(",8"));

  CHECK(run({"probe", "--checkpoint", ckpt, "--data", w.data.string(), "--task", "grasp", "--out", out.string()})
            .code == cli::kExitInput);
  CHECK(run({"probe", "--checkpoint", ckpt, "--data", w.data.string(), "--modality", "smell", "--out", out.string()})
            .code == cli::kExitInput);
  CHECK(lines(out / "eval.csv").size() == 3);
}

TEST_CASE("export-embeddings") {
  const auto& w = workspace();
  const fs::path pre = w.root / "pre_export";
  REQUIRE(run(w.pretrain_args(pre)).code == cli::kExitOk);
  const auto ckpt = pre / "final.ckpt";
  const fs::path csv = w.root / "emb.csv";
  REQUIRE(run({"export-embeddings", "--checkpoint", ckpt.string(), "--data", w.data.string(), "--space", "inter",
               "--out", csv.string()})
              .code == cli::kExitOk);
  const auto rows = lines(csv);
  const PairedDataset ds = load_dataset(w.data);
  REQUIRE(rows.size() == 1 + 2 * ds.size());
  CHECK(rows[0].starts_with("stem,modality,e0,"));

  // Compare the first visual row against the in-process embedding.
  const MViTacModel model = load_checkpoint(ckpt);
  const Checkpoint meta = read_checkpoint(ckpt);
  const AugmentationConfig aug = meta.metadata.at("augment").get<AugmentationConfig>();
  const std::vector<std::size_t> first{0};
  const Tensor z = embed(model, ds, first, aug, Modality::visual, EmbeddingSpace::inter);
  std::vector<std::string> cells;
  {
    std::stringstream ss(rows[1]);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  }
  REQUIRE(cells.size() == 2 + z.size());
  CHECK(cells[0] == ds.samples[0].stem);
  CHECK(cells[1] == "visual");
  double norm = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = std::stod(cells[2 + i]);
    CHECK(static_cast<Real>(v) == z.at(i));
    norm += v * v;
  }
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-4);

  CHECK(run({"export-embeddings", "--checkpoint", ckpt.string(), "--data", w.data.string(), "--space", "latent",
             "--out", csv.string()})
            .code == cli::kExitInput);
  const fs::path backbone = w.root / "emb_backbone.csv";
  REQUIRE(run({"export-embeddings", "--checkpoint", ckpt.string(), "--data", w.data.string(), "--space", "backbone",
               "--out", backbone.string()})
              .code == cli::kExitOk);
  CHECK(lines(backbone)[0].ends_with(",e63"));
}

TEST_CASE("divergence exits 3 with the checkpoint path") {
  const auto& w = workspace();
  auto args = w.pretrain_args(w.root / "pre_diverge");
  // A huge step size overflows the unnormalized activations within a few steps.
  args.insert(args.end(), {"--train.lr", "1e30"});
  const auto r = run(args);
  CHECK(r.code == cli::kExitDiverged);
  CHECK(r.err.find("last good checkpoint") != std::string::npos);
  CHECK_FALSE(fs::exists(w.root / "pre_diverge" / "final.ckpt"));
}
