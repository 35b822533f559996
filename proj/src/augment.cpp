#include "mrinet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <stdexcept>

#include "mrinet/error.hpp"

namespace mrinet {

namespace fs = std::filesystem;

Angle::Angle(double degrees) {
  if (!std::isfinite(degrees)) throw std::invalid_argument("angle must be finite");
  double d = std::fmod(degrees, 360.0);
  if (d < 0.0) d += 360.0;
  if (d >= 360.0) d = 0.0;  // fmod of tiny negatives can round up to 360
  degrees_ = d;
}

double Angle::radians() const { return degrees_ * std::numbers::pi / 180.0; }

bool Angle::quarter_turns(int& turns) const {
  const double q = degrees_ / 90.0;
  if (q != std::floor(q)) return false;
  turns = static_cast<int>(q);
  return true;
}

double Angle::cos() const {
  static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
  int q = 0;
  return quarter_turns(q) ? kCos[q] : std::cos(radians());
}

double Angle::sin() const {
  static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
  int q = 0;
  return quarter_turns(q) ? kSin[q] : std::sin(radians());
}

Point rotate_point(Point p, Angle a) {
  const double c = a.cos();
  const double s = a.sin();
  return Point{p.x * c + p.y * s, -p.x * s + p.y * c};
}

RotatedBounds rotated_bounds(ImageDims dims, Angle a) {
  if (dims.width == 0 || dims.height == 0) throw std::invalid_argument("empty image dims");
  int q = 0;
  if (a.quarter_turns(q)) {
    return q % 2 == 0 ? RotatedBounds{dims.width, dims.height}
                      : RotatedBounds{dims.height, dims.width};
  }
  const double w = static_cast<double>(dims.width) / 2.0;
  const double h = static_cast<double>(dims.height) / 2.0;
  const Point lt = rotate_point({-w, h}, a);
  const Point rt = rotate_point({w, h}, a);
  const Point lb = rotate_point({-w, -h}, a);
  const Point rb = rotate_point({w, -h}, a);
  const double des_w = std::max(std::abs(rb.x - lt.x), std::abs(rt.x - lb.x));
  const double des_h = std::max(std::abs(rb.y - lt.y), std::abs(rt.y - lb.y));
  // Ceiling, with slack so 100.0000000001 from rounding stays 100.
  auto up = [](double v) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v - 1e-9))); };
  return RotatedBounds{up(des_w), up(des_h)};
}

namespace {

Image rotate_quarter(const Image& img, int turns) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  if (turns == 0) return img;
  Image out(turns == 2 ? ImageDims{w, h} : ImageDims{h, w});
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) {
      std::size_t sc = 0;
      std::size_t sr = 0;
      if (turns == 1) {
        sc = r;
        sr = h - 1 - c;
      } else if (turns == 2) {
        sc = w - 1 - c;
        sr = h - 1 - r;
      } else {
        sc = w - 1 - r;
        sr = c;
      }
      out.at(c, r) = img.at(sc, sr);
    }
  }
  return out;
}

}  // namespace

Image rotate_image(const Image& img, Angle a, Interp interp, std::uint8_t fill) {
  if (img.pixels.size() != img.width() * img.height() || img.pixels.empty()) {
    throw std::invalid_argument("rotate_image: malformed image");
  }
  int q = 0;
  if (a.quarter_turns(q)) return rotate_quarter(img, q);

  const RotatedBounds b = rotated_bounds(img.dims, a);
  Image out(ImageDims{b.width, b.height}, fill);
  const Angle inverse(-a.degrees());
  const double sw = static_cast<double>(img.width());
  const double sh = static_cast<double>(img.height());
  const double dw = static_cast<double>(b.width);
  const double dh = static_cast<double>(b.height);
  const auto W = static_cast<std::int64_t>(img.width());
  const auto H = static_cast<std::int64_t>(img.height());

#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(b.height); ++r) {
    for (std::size_t c = 0; c < b.width; ++c) {
      // Destination pixel center in the center-origin, y-up frame.
      const Point dst{static_cast<double>(c) + 0.5 - dw / 2.0,
                      dh / 2.0 - (static_cast<double>(r) + 0.5)};
      const Point src = rotate_point(dst, inverse);
      // Back to storage coordinates where pixel centers sit on integers.
      const double sx = src.x + sw / 2.0 - 0.5;
      const double sy = sh / 2.0 - src.y - 0.5;
      std::uint8_t value = fill;
      if (interp == Interp::nearest) {
        const auto ix = static_cast<std::int64_t>(std::floor(sx + 0.5));
        const auto iy = static_cast<std::int64_t>(std::floor(sy + 0.5));
        if (ix >= 0 && ix < W && iy >= 0 && iy < H) {
          value = img.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
        }
      } else {
        const double fx = std::floor(sx);
        const double fy = std::floor(sy);
        const auto x0 = static_cast<std::int64_t>(fx);
        const auto y0 = static_cast<std::int64_t>(fy);
        if (x0 >= -1 && x0 < W && y0 >= -1 && y0 < H) {
          const double tx = sx - fx;
          const double ty = sy - fy;
          auto px = [&](std::int64_t x, std::int64_t y) -> double {
            if (x < 0 || x >= W || y < 0 || y >= H) return fill;
            return img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
          };
          const double v = (1 - ty) * ((1 - tx) * px(x0, y0) + tx * px(x0 + 1, y0)) +
                           ty * ((1 - tx) * px(x0, y0 + 1) + tx * px(x0 + 1, y0 + 1));
          value = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
      out.at(c, static_cast<std::size_t>(r)) = value;
    }
  }
  return out;
}

PixelCoord mirror_coord(PixelCoord c, ImageDims dims, MirrorAxis axis) {
  const auto w = static_cast<std::int64_t>(dims.width);
  const auto h = static_cast<std::int64_t>(dims.height);
  if (c.x < 0 || c.x >= w || c.y < 0 || c.y >= h) {
    throw std::out_of_range("mirror_coord: (" + std::to_string(c.x) + ", " +
                            std::to_string(c.y) + ") outside " + std::to_string(w) + "x" +
                            std::to_string(h));
  }
  if (axis == MirrorAxis::vertical) return {c.x, h - c.y - 1};
  return {w - c.x - 1, c.y};
}

Image mirror_image(const Image& img, MirrorAxis axis) {
  Image out(img.dims);
  const auto w = static_cast<std::int64_t>(img.width());
  const auto h = static_cast<std::int64_t>(img.height());
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const PixelCoord m = mirror_coord({x, y}, img.dims, axis);
      out.at(static_cast<std::size_t>(m.x), static_cast<std::size_t>(m.y)) =
          img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }
  }
  return out;
}

std::string op_tag(const AugmentOp& op) {
  if (const auto* r = std::get_if<RotateOp>(&op)) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "rot%.10g", r->angle.degrees());
    return buf;
  }
  return std::get<MirrorOp>(op).axis == MirrorAxis::vertical ? "mirror-vertical"
                                                             : "mirror-horizontal";
}

DatasetManifest augment_dataset(const DatasetManifest& manifest, std::span<const AugmentOp> plan,
                                const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw std::runtime_error("cannot create output directory '" + out_dir.string() + "'");
  }
  const fs::path out_abs = fs::absolute(out_dir).lexically_normal();
  const fs::path src_abs = fs::absolute(manifest.base_dir).lexically_normal();

  DatasetManifest out;
  out.base_dir = out_dir;
  for (const ManifestRow& r : manifest.rows) {
    ManifestRow copy = r;
    copy.path = (src_abs / r.path).lexically_normal().lexically_relative(out_abs).generic_string();
    out.rows.push_back(copy);
  }
  if (plan.empty()) return out;

  std::vector<std::size_t> order(manifest.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return manifest.rows[a].path < manifest.rows[b].path;
  });

  std::set<std::string> names;
  for (const ManifestRow& r : out.rows) names.insert(r.path);
  for (std::size_t i : order) {
    const ManifestRow& row = manifest.rows[i];
    const Image src = read_pgm(manifest.resolve(row));
    const std::string stem = fs::path(row.path).stem().string();
    for (const AugmentOp& op : plan) {
      const Image img = std::holds_alternative<RotateOp>(op)
                            ? rotate_image(src, std::get<RotateOp>(op).angle)
                            : mirror_image(src, std::get<MirrorOp>(op).axis);
      const std::string name = stem + "_" + op_tag(op) + ".pgm";
      if (!names.insert(name).second) {
        throw DataError("augment_dataset: output name '" + name + "' collides (source '" +
                        row.path + "')");
      }
      write_pgm(img, out_dir / name);
      out.rows.push_back({name, row.label, row.split});
    }
  }
  return out;
}

}  // namespace mrinet
