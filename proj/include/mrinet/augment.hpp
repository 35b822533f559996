#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>

#include "mrinet/dataset.hpp"
#include "mrinet/image.hpp"

namespace mrinet {

// Center-origin, y-up coordinates.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Rotation angle in degrees, normalized to [0, 360).
class Angle {
 public:
  explicit Angle(double degrees);
  double degrees() const { return degrees_; }
  double radians() const;
  // Quarter turns in [0, 4) when the angle is an exact multiple of 90.
  bool quarter_turns(int& turns) const;
  // Exact for multiples of 90, std::cos/std::sin otherwise.
  double cos() const;
  double sin() const;

 private:
  double degrees_;
};

struct RotatedBounds {
  std::size_t width = 0;
  std::size_t height = 0;
  bool operator==(const RotatedBounds&) const = default;
};

// x1 = x0 cos a + y0 sin a, y1 = -x0 sin a + y0 cos a (clockwise in a y-up frame).
Point rotate_point(Point p, Angle a);

// Canvas that holds the rotated image: the four corners are rotated and
// desWidth = max(|pRBN.x - pLTN.x|, |pRTN.x - pLBN.x|), likewise for the
// height, rounded up. Multiples of 90 return the (swapped) source dims.
RotatedBounds rotated_bounds(ImageDims dims, Angle a);

enum class Interp { nearest, bilinear };

// Inverse-mapped resampling onto the rotated_bounds canvas. Quarter turns are
// an index permutation.
Image rotate_image(const Image& img, Angle a, Interp interp = Interp::nearest,
                   std::uint8_t fill = 0);

enum class MirrorAxis { vertical, horizontal };

struct PixelCoord {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const PixelCoord&) const = default;
};

// vertical: (x, height - y - 1); horizontal: (width - x - 1, y).
// Throws std::out_of_range for coordinates outside the image.
PixelCoord mirror_coord(PixelCoord c, ImageDims dims, MirrorAxis axis);
Image mirror_image(const Image& img, MirrorAxis axis);

struct RotateOp {
  Angle angle;
};
struct MirrorOp {
  MirrorAxis axis;
};
using AugmentOp = std::variant<RotateOp, MirrorOp>;

// File-name tag: "rot90", "rot22.5", "mirror-vertical".
std::string op_tag(const AugmentOp& op);

// Writes one image per (source, op) into out_dir as <stem>_<tag>.pgm. The
// returned manifest lives in out_dir: originals first (paths rebased), then
// the new rows sorted by source path, then op order.
DatasetManifest augment_dataset(const DatasetManifest& manifest, std::span<const AugmentOp> plan,
                                const std::filesystem::path& out_dir);

}  // namespace mrinet
