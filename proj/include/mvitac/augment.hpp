// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mvitac/dataset.hpp"
#include "mvitac/image.hpp"
#include "mvitac/model.hpp"

namespace mvitac {

struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
  bool operator==(const Normalization&) const = default;
};

struct AugmentationConfig {
  std::size_t resize_to = 36;
  std::size_t crop_to = 32;
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double hflip_prob = 0.5;
  double grayscale_prob = 0.2;
  // Empty statistics are filled from the training data before use.
  Normalization visual_norm;
  Normalization tactile_norm;
  bool grasp_mode = false;

  // 256 -> 224 geometry.
  static AugmentationConfig paper_scale();

  void validate() const;
  // Grayscale is never applied in grasp mode.
  double effective_grayscale_prob() const { return grasp_mode ? 0.0 : grayscale_prob; }
  const Normalization& norm(Modality m) const { return m == Modality::visual ? visual_norm : tactile_norm; }
};

struct AugmentTrace {
  std::size_t crop_y = 0;
  std::size_t crop_x = 0;
  std::size_t crop_size = 0;
  bool flipped = false;
  bool grayscaled = false;
};

// resize -> random resized crop -> horizontal flip -> grayscale -> normalize.
// Deterministic in (image, config, seed).
Image augment(const Image& image, const AugmentationConfig& config, Modality modality, std::uint64_t seed,
              AugmentTrace* trace = nullptr);

// resize -> center crop -> normalize; used for probing, retrieval and export.
Image eval_transform(const Image& image, const AugmentationConfig& config, Modality modality);

struct SampleViews {
  Image visual_q;
  Image visual_k;
  Image tactile_q;
  Image tactile_k;
};

// Four independent augmentation draws seeded from derive_seed(seed, {0..3}).
SampleViews make_views(const PairedSample& sample, const AugmentationConfig& config, std::uint64_t seed);

// Per-sample seeds come from (seed, sample index, epoch) so the result does not
// depend on how work is scheduled across threads.
ViewBatch make_view_batch(const PairedDataset& dataset, std::span<const std::size_t> indices,
                          const AugmentationConfig& config, std::uint64_t seed, std::size_t epoch);

// Stacks equally sized images into an [N,C,H,W] tensor.
Tensor images_to_tensor(std::span<const Image> images);

// Per-channel mean/std of the raw [0,1] images of one modality over `indices`.
Normalization compute_normalization(const PairedDataset& dataset, Modality modality,
                                    std::span<const std::size_t> indices);

}  // namespace mvitac
