// SPDX-License-Identifier: Apache-2.0

#include "mvitac/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mvitac/error.hpp"
#include "mvitac/rng.hpp"

namespace mvitac {

namespace {

struct ClassStyle {
  float tint[3];
  double orientation;  // radians
  double frequency;    // cycles per image width
  float gel[3];
  std::size_t blobs;
};

ClassStyle class_style(std::size_t c, std::size_t classes) {
  // Palette draws are keyed on the class index only so every dataset shares them.
  Rng rng(derive_seed(0x7a11e, {c}));
  ClassStyle s{};
  for (float& t : s.tint) t = static_cast<float>(0.2 + 0.6 * uniform01(rng));
  // Gel hues sit evenly around the color wheel so the tactile class cue
  // survives the shared brightness offset.
  const double hue = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
  for (std::size_t k = 0; k < 3; ++k) {
    s.gel[k] = static_cast<float>(0.4 + 0.2 * std::cos(hue + 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0));
  }
  s.orientation = std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
  s.frequency = 2.0 + 2.0 * static_cast<double>(c % 3);
  s.blobs = 3 + 5 * c;
  return s;
}

Image make_visual(const ClassStyle& st, std::size_t size, double a, double b, double noise, Rng& rng) {
  Image img(3, size, size);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * uniform01(rng);
  const double contrast = 0.05 + 0.25 * a;
  const double offset = 0.25 * (b - 0.5);
  const double cs = std::cos(st.orientation), sn = std::sin(st.orientation);
  const double k = 2.0 * std::numbers::pi * st.frequency / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double wave = contrast * std::sin(k * (static_cast<double>(x) * cs + static_cast<double>(y) * sn) + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(std::clamp(st.tint[c] + offset + wave + noise * gauss(rng), 0.0, 1.0));
      }
    }
  return img;
}

Image make_tactile(const ClassStyle& st, std::size_t size, double a, double b, double noise, Rng& rng) {
  Image img(3, size, size);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = static_cast<double>(size) / 32.0;
  const double radius = (1.0 + 2.0 * a) * scale;
  const double offset = 0.25 * (b - 0.5);
  std::vector<double> field(size * size, 0.0);
  for (std::size_t i = 0; i < st.blobs; ++i) {
    const double cy = uniform01(rng) * static_cast<double>(size);
    const double cx = uniform01(rng) * static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        field[y * size + x] += std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      }
  }
  static constexpr double kShade[3] = {0.45, 0.35, 0.25};
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double contact = std::min(field[y * size + x], 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) =
            static_cast<float>(std::clamp(st.gel[c] + offset + kShade[c] * contact + noise * gauss(rng), 0.0, 1.0));
      }
    }
  return img;
}

}  // namespace

void SynthSpec::validate() const {
  if (class_count < 2) throw ConfigError("synth: class_count must be >= 2");
  if (samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
  if (image_size < 4) throw ConfigError("synth: image_size must be >= 4");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("synth: test_fraction must be in [0,1)");
}

PairedDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  PairedDataset ds;
  ds.layout = Layout::pair;
  const auto n_test = static_cast<std::size_t>(std::lround(spec.test_fraction * static_cast<double>(spec.samples_per_class)));
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const ClassStyle style = class_style(c, spec.class_count);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng shared(derive_seed(spec.seed, {c, i, 0}));
      const double a = uniform01(shared);
      const double b = uniform01(shared);
      Rng vis_rng(derive_seed(spec.seed, {c, i, 1}));
      Rng tac_rng(derive_seed(spec.seed, {c, i, 2}));
      PairedSample s;
      s.stem = "s" + std::to_string(c) + "_" + std::to_string(i);
      s.visual = make_visual(style, spec.image_size, a, b, spec.noise_std, vis_rng);
      s.tactile = make_tactile(style, spec.image_size, a, b, spec.noise_std, tac_rng);
      s.set_label(Task::category, static_cast<int>(c));
      s.set_label(Task::hard_soft, static_cast<int>(c % 2));
      s.set_label(Task::rough_smooth, static_cast<int>((c / 2) % 2));
      s.split = i + n_test >= spec.samples_per_class ? Split::test : Split::train;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace mvitac
