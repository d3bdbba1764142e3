// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "mvitac/dataset.hpp"

namespace mvitac {

// Synthetic paired visuotactile data.
//
// Visual images are class-tinted oriented gratings; tactile images are
// gel-like fields of gaussian contact blobs whose density and background shade
// are set by the class. Each sample also draws two latent properties shared by
// both modalities: `a` sets grating contrast and blob radius, `b` shifts the
// brightness of both images. Phase, blob placement and noise are independent
// per modality, so class and (a, b) are the only cross-modal links.
struct SynthSpec {
  std::size_t class_count = 4;
  std::size_t samples_per_class = 128;
  std::size_t image_size = 32;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;  // per class, assigned via PairedSample::split

  void validate() const;
};

// Samples are ordered class-major; stems are "s<class>_<index>". Labels:
// category = class, hard_soft = class % 2, rough_smooth = (class / 2) % 2.
PairedDataset synth_generate(const SynthSpec& spec);

}  // namespace mvitac
