// SPDX-License-Identifier: Apache-2.0

#include "mvitac/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mvitac/error.hpp"
#include "mvitac/ops.hpp"
#include "mvitac/optim.hpp"
#include "mvitac/rng.hpp"

namespace mvitac {

const char* to_string(ProbeInput input) { return input == ProbeInput::tactile ? "tactile" : "both"; }

ProbeInput parse_probe_input(const std::string& name) {
  if (name == "tactile") return ProbeInput::tactile;
  if (name == "both") return ProbeInput::both;
  throw ConfigError("unknown probe modality '" + name + "' (expected tactile|both)");
}

void ProbeConfig::validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ConfigError("probe: dropout_prob must be in [0,1)");
  if (!(lr > 0.0)) throw ConfigError("probe: lr must be > 0");
  if (epochs == 0) throw ConfigError("probe: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("probe: batch_size must be >= 2");
}

namespace {

constexpr std::size_t kFeatureChunk = 64;

Tensor standardized(const Tensor& features, const std::vector<double>& mean, const std::vector<double>& sd) {
  if (mean.empty()) return features;
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (mean.size() != d) {
    throw ShapeError("classifier expects " + std::to_string(mean.size()) + " features, got " + std::to_string(d));
  }
  Tensor out(features.shape());
  auto src = features.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) dst[i * d + j] = static_cast<Real>((src[i * d + j] - mean[j]) / sd[j]);
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t d = t.dim(1);
  std::vector<Real> data;
  data.reserve(rows.size() * d);
  for (std::size_t r : rows) data.insert(data.end(), t.data().begin() + r * d, t.data().begin() + (r + 1) * d);
  return Tensor({rows.size(), d}, std::move(data));
}

void check_compatible(const MViTacModel& model, const PairedDataset& dataset) {
  if (dataset.samples.empty()) return;
  const auto& s = dataset.samples.front();
  if (s.tactile.channels != model.config().tactile.in_channels) {
    throw ConfigError("checkpoint tactile encoder expects " + std::to_string(model.config().tactile.in_channels) +
                      " channels but the dataset provides " + std::to_string(s.tactile.channels) + " (" +
                      to_string(dataset.layout) + " layout)");
  }
  if (s.visual.channels != model.config().visual.in_channels) {
    throw ConfigError("checkpoint visual encoder expects " + std::to_string(model.config().visual.in_channels) +
                      " channels but the dataset provides " + std::to_string(s.visual.channels));
  }
}

std::vector<std::size_t> labelled(const PairedDataset& dataset, std::span<const std::size_t> indices, Task task,
                                  std::vector<int>& labels) {
  std::vector<std::size_t> out;
  for (std::size_t i : indices) {
    if (auto l = dataset.samples.at(i).label(task)) {
      out.push_back(i);
      labels.push_back(*l);
    }
  }
  return out;
}

}  // namespace

const char* to_string(EmbeddingSpace space) {
  switch (space) {
    case EmbeddingSpace::backbone: return "backbone";
    case EmbeddingSpace::intra: return "intra";
    case EmbeddingSpace::inter: return "inter";
  }
  return "?";
}

EmbeddingSpace parse_embedding_space(const std::string& name) {
  if (name == "backbone") return EmbeddingSpace::backbone;
  if (name == "intra") return EmbeddingSpace::intra;
  if (name == "inter") return EmbeddingSpace::inter;
  throw ConfigError("unknown embedding space '" + name + "' (expected backbone|intra|inter)");
}

Tensor embed(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
             const AugmentationConfig& augment, Modality modality, EmbeddingSpace space) {
  if (indices.empty()) throw EvaluationError("embed: no samples");
  check_compatible(model, dataset);
  const ModalityBranch& branch = modality == Modality::visual ? model.visual() : model.tactile();
  std::vector<Real> rows;
  std::size_t dim = 0;
  for (std::size_t lo = 0; lo < indices.size(); lo += kFeatureChunk) {
    const std::size_t hi = std::min(indices.size(), lo + kFeatureChunk);
    std::vector<Image> images(hi - lo);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(hi - lo); ++i) {
      const auto& s = dataset.samples.at(indices[lo + i]);
      images[i] = eval_transform(modality == Modality::visual ? s.visual : s.tactile, augment, modality);
    }
    Tensor f = branch.query_encoder.forward(images_to_tensor(images));
    if (space == EmbeddingSpace::intra) f = branch.intra_head_q.forward(f);
    if (space == EmbeddingSpace::inter) f = branch.inter_head_q.forward(f);
    dim = f.dim(1);
    rows.insert(rows.end(), f.data().begin(), f.data().end());
  }
  return Tensor({indices.size(), dim}, std::move(rows));
}

Tensor LinearClassifier::logits(const Tensor& features) const {
  return ops::add_bias(ops::matmul(standardized(features, feature_mean, feature_std), weight), bias);
}

std::vector<int> LinearClassifier::predict(const Tensor& features) const {
  const Tensor z = logits(features);
  const std::size_t n = z.dim(0), c = z.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (z.data()[i * c + j] > z.data()[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

void LinearClassifier::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["input"] = to_string(input);
  j["class_count"] = class_count;
  j["weight_shape"] = weight.shape();
  j["weight"] = std::vector<double>(weight.data().begin(), weight.data().end());
  j["bias"] = std::vector<double>(bias.data().begin(), bias.data().end());
  j["feature_mean"] = feature_mean;
  j["feature_std"] = feature_std;
  std::ofstream f(path);
  f << j.dump(1) << '\n';
  if (!f) throw Error("cannot write classifier " + path.string());
}

LinearClassifier LinearClassifier::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read classifier " + path.string());
  const auto j = nlohmann::json::parse(f);
  LinearClassifier c;
  c.input = parse_probe_input(j.at("input").get<std::string>());
  c.class_count = j.at("class_count").get<std::size_t>();
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  c.weight = Tensor(j.at("weight_shape").get<Shape>(), std::vector<Real>(w.begin(), w.end()));
  c.bias = Tensor({b.size()}, std::vector<Real>(b.begin(), b.end()));
  c.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  c.feature_std = j.at("feature_std").get<std::vector<double>>();
  return c;
}

Tensor extract_features(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
                        const AugmentationConfig& augment, ProbeInput input) {
  const Tensor tactile = embed(model, dataset, indices, augment, Modality::tactile, EmbeddingSpace::backbone);
  if (input == ProbeInput::tactile) return tactile;
  return ops::concat_columns(tactile, embed(model, dataset, indices, augment, Modality::visual, EmbeddingSpace::backbone));
}

EvalResult evaluate_features(const LinearClassifier& classifier, const Tensor& features, std::span<const int> labels) {
  if (labels.empty() || features.dim(0) == 0) throw EvaluationError("evaluate: empty dataset");
  if (labels.size() != features.dim(0)) throw ShapeError("evaluate: label count does not match feature rows");
  const std::size_t c = classifier.class_count;
  EvalResult r;
  r.n = labels.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  const auto pred = classifier.predict(features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw LabelError("evaluate: label " + std::to_string(labels[i]) + " >= class count " + std::to_string(c));
    }
    ++r.confusion[labels[i]][pred[i]];
    correct += pred[i] == labels[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  return r;
}

EvalResult evaluate(const LinearClassifier& classifier, const MViTacModel& model, const PairedDataset& dataset,
                    std::span<const std::size_t> indices, Task task, const AugmentationConfig& augment) {
  std::vector<int> labels;
  const auto rows = labelled(dataset, indices, task, labels);
  if (rows.empty()) throw EvaluationError("evaluate: no labelled samples for task " + std::string(to_string(task)));
  return evaluate_features(classifier, extract_features(model, dataset, rows, augment, classifier.input), labels);
}

ProbeResult linear_probe_train_features(const Tensor& train_features, std::span<const int> train_labels,
                                        const Tensor& test_features, std::span<const int> test_labels,
                                        const ProbeConfig& config) {
  config.validate();
  if (train_labels.empty()) throw EvaluationError("probe: no labelled training samples");
  std::size_t classes = config.class_count;
  if (classes == 0) {
    int mx = 0;
    for (int l : train_labels) mx = std::max(mx, l);
    for (int l : test_labels) mx = std::max(mx, l);
    classes = static_cast<std::size_t>(mx) + 1;
  }
  for (auto labels : {train_labels, test_labels}) {
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= classes) {
        throw LabelError("probe: label " + std::to_string(l) + " outside class count " + std::to_string(classes));
      }
    }
  }
  const std::size_t n = train_features.dim(0), d = train_features.dim(1);

  LinearClassifier clf;
  clf.input = config.input;
  clf.class_count = classes;
  if (config.standardize) {
    clf.feature_mean.assign(d, 0.0);
    clf.feature_std.assign(d, 0.0);
    auto x = train_features.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) clf.feature_mean[j] += x[i * d + j];
    for (double& m : clf.feature_mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = x[i * d + j] - clf.feature_mean[j];
        clf.feature_std[j] += dv * dv;
      }
    for (double& s : clf.feature_std) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-6);
  }
  clf.weight = Tensor({d, classes}).set_requires_grad(true);
  clf.bias = Tensor({classes}).set_requires_grad(true);

  const Tensor x_train = standardized(train_features, clf.feature_mean, clf.feature_std);
  Adam optimizer({{"probe.weight", clf.weight}, {"probe.bias", clf.bias}},
                 AdamConfig{config.lr, 0.9, 0.999, 1e-7});
  const Batcher batcher(n, std::min(config.batch_size, std::max<std::size_t>(n, 2)), derive_seed(config.seed, {0x9b}),
                        false);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& batch : batcher.epoch(epoch)) {
      const Tensor xb = gather_rows(x_train, batch);
      std::vector<int> yb;
      for (std::size_t b : batch) yb.push_back(train_labels[b]);
      Tape tape;
      const Tensor dropped = ops::dropout(xb, config.dropout_prob, true, derive_seed(config.seed, {0xd0, step}), &tape);
      const Tensor z = ops::add_bias(ops::matmul(dropped, clf.weight, &tape), clf.bias, &tape);
      const Tensor loss = ops::softmax_cross_entropy(z, yb, &tape);
      optimizer.zero_grad();
      tape.backward(loss);
      optimizer.step();
      ++step;
    }
  }
  clf.weight.set_requires_grad(false).clear_grad();
  clf.bias.set_requires_grad(false).clear_grad();

  ProbeResult r;
  r.train_accuracy = evaluate_features(clf, train_features, train_labels).accuracy;
  if (!test_labels.empty()) r.test = evaluate_features(clf, test_features, test_labels);
  r.classifier = std::move(clf);
  return r;
}

ProbeResult linear_probe_train(const MViTacModel& model, const PairedDataset& dataset,
                               std::span<const std::size_t> train_indices, std::span<const std::size_t> test_indices,
                               Task task, const AugmentationConfig& augment, const ProbeConfig& config) {
  check_compatible(model, dataset);
  std::vector<int> train_labels, test_labels;
  const auto train_rows = labelled(dataset, train_indices, task, train_labels);
  const auto test_rows = labelled(dataset, test_indices, task, test_labels);
  if (train_rows.empty()) {
    throw EvaluationError("probe: no training samples labelled for task " + std::string(to_string(task)));
  }
  const Tensor train_features = extract_features(model, dataset, train_rows, augment, config.input);
  const Tensor test_features =
      test_rows.empty() ? Tensor{} : extract_features(model, dataset, test_rows, augment, config.input);
  return linear_probe_train_features(train_features, train_labels, test_features, test_labels, config);
}

double retrieval_accuracy(const Tensor& queries, const Tensor& keys, std::size_t k) {
  if (queries.rank() != 2 || queries.shape() != keys.shape()) {
    throw ShapeError("retrieval: queries " + to_string(queries.shape()) + " and keys " + to_string(keys.shape()) +
                     " must both be [N,D]");
  }
  const std::size_t n = queries.dim(0);
  if (k == 0 || k >= n) {
    throw ConfigError("retrieval: k = " + std::to_string(k) + " must satisfy 1 <= k < dataset size " +
                      std::to_string(n));
  }
  const Tensor sim = ops::matmul(queries, ops::transpose(keys));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real* row = sim.data().data() + i * n;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > row[i] || (row[j] == row[i] && j < i)) ++rank;
    }
    hits += rank < k;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double retrieval_eval(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
                      const AugmentationConfig& augment, std::size_t k) {
  check_compatible(model, dataset);
  if (k >= indices.size()) {
    throw ConfigError("retrieval: k = " + std::to_string(k) + " must be smaller than the dataset size " +
                      std::to_string(indices.size()));
  }
  const Tensor visual = embed(model, dataset, indices, augment, Modality::visual, EmbeddingSpace::inter);
  const Tensor tactile = embed(model, dataset, indices, augment, Modality::tactile, EmbeddingSpace::inter);
  return retrieval_accuracy(visual, tactile, k);
}

}  // namespace mvitac
