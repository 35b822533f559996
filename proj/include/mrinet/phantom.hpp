#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mrinet/dataset.hpp"
#include "mrinet/image.hpp"

namespace mrinet {

inline constexpr double kDefaultPhantomNoise = 12.0;

struct PhantomParams {
  std::size_t size = 64;
  double noise_std = kDefaultPhantomNoise;
  std::uint64_t seed = 0;
  ClassLabel label = ClassLabel::Normal;
};

// Synthetic axial "brain": a jittered ellipse with a dark midline band and two
// midbrain regions holding a bright comma-shaped blob in a dark surround.
//   Normal: blob present, narrow band.
//   PD:     each blob region filled with its own mean (blob absent).
//   MSA:    blob present, band widened and lightened so total band mass matches.
// Gaussian noise inside the brain has its in-brain mean removed, so class
// does not shift the mean intensity. All random draws happen in the same
// order for every class, so a fixed seed gives the same geometry and noise.
Image generate_phantom(const PhantomParams& params);

// 1 where the image depends on whether the blob is present.
std::vector<std::uint8_t> phantom_blob_mask(const PhantomParams& params);

// 3 * per_class images named <label>_<index>.pgm plus an unsplit manifest
// whose base_dir is out_dir (the manifest file itself is not written).
DatasetManifest generate_dataset(std::size_t per_class, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, std::size_t size = 64,
                                 double noise_std = kDefaultPhantomNoise);

}  // namespace mrinet
