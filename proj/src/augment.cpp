// SPDX-License-Identifier: Apache-2.0

#include "mvitac/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "mvitac/error.hpp"
#include "mvitac/rng.hpp"

namespace mvitac {

namespace {

void grayscale_inplace(Image& img) {
  const std::size_t plane = img.height * img.width;
  if (img.channels % 3 == 0) {
    for (std::size_t g = 0; g < img.channels; g += 3) {
      float* r = img.pixels.data() + g * plane;
      float* gr = r + plane;
      float* b = gr + plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const float lum = 0.299f * r[p] + 0.587f * gr[p] + 0.114f * b[p];
        r[p] = gr[p] = b[p] = lum;
      }
    }
    return;
  }
  for (std::size_t p = 0; p < plane; ++p) {
    float s = 0.0f;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.pixels[c * plane + p];
    for (std::size_t c = 0; c < img.channels; ++c) img.pixels[c * plane + p] = s / static_cast<float>(img.channels);
  }
}

void normalize_inplace(Image& img, const Normalization& norm) {
  if (norm.empty()) return;
  if (norm.mean.size() != img.channels || norm.std.size() != img.channels) {
    throw ConfigError("normalization has " + std::to_string(norm.mean.size()) + " channels, image has " +
                      std::to_string(img.channels));
  }
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double m = norm.mean[c], s = norm.std[c];
    for (std::size_t p = 0; p < plane; ++p) {
      float& v = img.pixels[c * plane + p];
      v = static_cast<float>((v - m) / s);
    }
  }
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augmentation: ") + name + " must be in [0,1]");
}

void check_norm(const Normalization& n, const char* name) {
  if (n.mean.size() != n.std.size()) throw ConfigError(std::string("augmentation: ") + name + " mean/std lengths differ");
  for (double s : n.std) {
    if (!(s > 0.0)) throw ConfigError(std::string("augmentation: ") + name + " std must be > 0");
  }
}

}  // namespace

AugmentationConfig AugmentationConfig::paper_scale() {
  AugmentationConfig c;
  c.resize_to = 256;
  c.crop_to = 224;
  return c;
}

void AugmentationConfig::validate() const {
  if (crop_to == 0 || resize_to == 0) throw ConfigError("augmentation: sizes must be >= 1");
  if (crop_to > resize_to) {
    throw ConfigError("augmentation: crop_to " + std::to_string(crop_to) + " exceeds resize_to " +
                      std::to_string(resize_to));
  }
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw ConfigError("augmentation: crop scale range must satisfy 0 < min <= max <= 1");
  }
  check_prob(hflip_prob, "hflip_prob");
  check_prob(grayscale_prob, "grayscale_prob");
  check_norm(visual_norm, "visual_norm");
  check_norm(tactile_norm, "tactile_norm");
}

Image augment(const Image& image, const AugmentationConfig& config, Modality modality, std::uint64_t seed,
              AugmentTrace* trace) {
  config.validate();
  if (image.empty()) throw ConfigError("augment: empty image");
  Rng rng(mix_seed(seed));
  const double u_scale = uniform01(rng);
  const double u_y = uniform01(rng);
  const double u_x = uniform01(rng);
  const double u_flip = uniform01(rng);
  const double u_gray = uniform01(rng);

  const std::size_t r = config.resize_to;
  const Image resized = resize_bilinear(image, r, r);
  const double area = config.crop_scale_min + (config.crop_scale_max - config.crop_scale_min) * u_scale;
  const std::size_t side =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area) * static_cast<double>(r))), 1, r);
  const std::size_t slack = r - side;
  const std::size_t y0 = std::min(slack, static_cast<std::size_t>(u_y * static_cast<double>(slack + 1)));
  const std::size_t x0 = std::min(slack, static_cast<std::size_t>(u_x * static_cast<double>(slack + 1)));
  Image out = resize_bilinear(crop(resized, y0, x0, side, side), config.crop_to, config.crop_to);

  const bool flip = u_flip < config.hflip_prob;
  if (flip) out = flip_horizontal(out);
  const bool gray = u_gray < config.effective_grayscale_prob();
  if (gray) grayscale_inplace(out);
  normalize_inplace(out, config.norm(modality));

  if (trace) *trace = AugmentTrace{y0, x0, side, flip, gray};
  return out;
}

Image eval_transform(const Image& image, const AugmentationConfig& config, Modality modality) {
  config.validate();
  const std::size_t r = config.resize_to, c = config.crop_to;
  const std::size_t off = (r - c) / 2;
  Image out = crop(resize_bilinear(image, r, r), off, off, c, c);
  normalize_inplace(out, config.norm(modality));
  return out;
}

SampleViews make_views(const PairedSample& sample, const AugmentationConfig& config, std::uint64_t seed) {
  return SampleViews{augment(sample.visual, config, Modality::visual, derive_seed(seed, {0})),
                     augment(sample.visual, config, Modality::visual, derive_seed(seed, {1})),
                     augment(sample.tactile, config, Modality::tactile, derive_seed(seed, {2})),
                     augment(sample.tactile, config, Modality::tactile, derive_seed(seed, {3}))};
}

ViewBatch make_view_batch(const PairedDataset& dataset, std::span<const std::size_t> indices,
                          const AugmentationConfig& config, std::uint64_t seed, std::size_t epoch) {
  const std::size_t n = indices.size();
  std::vector<Image> vq(n), vk(n), tq(n), tk(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const std::size_t idx = indices[i];
    SampleViews v = make_views(dataset.samples.at(idx), config, derive_seed(seed, {idx, epoch}));
    vq[i] = std::move(v.visual_q);
    vk[i] = std::move(v.visual_k);
    tq[i] = std::move(v.tactile_q);
    tk[i] = std::move(v.tactile_k);
  }
  return ViewBatch{images_to_tensor(vq), images_to_tensor(vk), images_to_tensor(tq), images_to_tensor(tk)};
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& first = images.front();
  std::vector<Real> data;
  data.reserve(images.size() * first.pixels.size());
  for (const Image& img : images) {
    if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
      throw ShapeError("images_to_tensor: images in a batch must share one shape");
    }
    data.insert(data.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor({images.size(), first.channels, first.height, first.width}, std::move(data));
}

Normalization compute_normalization(const PairedDataset& dataset, Modality modality,
                                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("compute_normalization: no samples");
  const auto& probe = modality == Modality::visual ? dataset.samples.at(indices[0]).visual
                                                   : dataset.samples.at(indices[0]).tactile;
  const std::size_t channels = probe.channels;
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0), count(channels, 0.0);
  for (std::size_t idx : indices) {
    const Image& img = modality == Modality::visual ? dataset.samples.at(idx).visual : dataset.samples.at(idx).tactile;
    if (img.channels != channels) throw DatasetFormatError("compute_normalization: inconsistent channel counts");
    const std::size_t plane = img.height * img.width;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = img.pixels[c * plane + p];
        sum[c] += v;
        sq[c] += v * v;
      }
      count[c] += static_cast<double>(plane);
    }
  }
  Normalization n;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / count[c];
    const double var = std::max(0.0, sq[c] / count[c] - mean * mean);
    n.mean.push_back(mean);
    n.std.push_back(std::max(std::sqrt(var), 1e-6));
  }
  return n;
}

}  // namespace mvitac
