// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mvitac/augment.hpp"
#include "mvitac/dataset.hpp"
#include "mvitac/model.hpp"

namespace mvitac {

enum class ProbeInput { tactile, both };

const char* to_string(ProbeInput input);
ProbeInput parse_probe_input(const std::string& name);

struct ProbeConfig {
  ProbeInput input = ProbeInput::both;
  double dropout_prob = 0.2;
  std::size_t class_count = 0;  // 0: infer from the labels
  double lr = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  // Scale features to zero mean / unit variance with training-split statistics.
  bool standardize = false;

  void validate() const;
};

// Linear layer over frozen backbone features.
struct LinearClassifier {
  ProbeInput input = ProbeInput::both;
  std::size_t class_count = 0;
  Tensor weight;  // [D, C]
  Tensor bias;    // [C]
  std::vector<double> feature_mean;
  std::vector<double> feature_std;

  // Logits of standardized features; no dropout.
  Tensor logits(const Tensor& features) const;
  // Argmax per row; ties go to the lowest class index.
  std::vector<int> predict(const Tensor& features) const;

  void save(const std::filesystem::path& path) const;
  static LinearClassifier load(const std::filesystem::path& path);
};

enum class EmbeddingSpace { backbone, intra, inter };

const char* to_string(EmbeddingSpace space);
EmbeddingSpace parse_embedding_space(const std::string& name);

// Query-side features of one modality on eval-transformed images. Head spaces
// have unit-norm rows.
Tensor embed(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
             const AugmentationConfig& augment, Modality modality, EmbeddingSpace space);

// Backbone features of the query encoders (projection heads are bypassed) on
// eval-transformed images. Tactile mode returns the tactile features; `both`
// concatenates [tactile, visual].
Tensor extract_features(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
                        const AugmentationConfig& augment, ProbeInput input);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult evaluate_features(const LinearClassifier& classifier, const Tensor& features, std::span<const int> labels);

EvalResult evaluate(const LinearClassifier& classifier, const MViTacModel& model, const PairedDataset& dataset,
                    std::span<const std::size_t> indices, Task task, const AugmentationConfig& augment);

struct ProbeResult {
  LinearClassifier classifier;
  double train_accuracy = 0.0;
  EvalResult test;
};

// Trains a linear classifier (dropout + linear) on frozen features with Adam.
// Samples without a label for `task` are ignored. Encoder parameters are not
// modified.
ProbeResult linear_probe_train(const MViTacModel& model, const PairedDataset& dataset,
                               std::span<const std::size_t> train_indices, std::span<const std::size_t> test_indices,
                               Task task, const AugmentationConfig& augment, const ProbeConfig& config);

// Same as above on precomputed features.
ProbeResult linear_probe_train_features(const Tensor& train_features, std::span<const int> train_labels,
                                        const Tensor& test_features, std::span<const int> test_labels,
                                        const ProbeConfig& config);

// Fraction of query rows whose same-index key ranks within the top k by dot
// product. Ties are ranked in index order.
double retrieval_accuracy(const Tensor& queries, const Tensor& keys, std::size_t k);

// Visual queries in the visual inter-head space against tactile keys in the
// tactile inter-head space.
double retrieval_eval(const MViTacModel& model, const PairedDataset& dataset, std::span<const std::size_t> indices,
                      const AugmentationConfig& augment, std::size_t k);

}  // namespace mvitac
