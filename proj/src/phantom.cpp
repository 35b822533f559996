#include "mrinet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mrinet/rng.hpp"

namespace mrinet {

namespace fs = std::filesystem;

namespace {

constexpr double kBrain = 110.0;
constexpr double kBand = 40.0;
constexpr double kBlob = 190.0;
constexpr double kSurround = 60.0;

struct Geometry {
  double cx, cy, ax, ay;     // brain ellipse center and semi-axes
  double band_top, band_bottom;
  double band_narrow, band_wide;  // half widths
  double blob_dx, blob_y, radius;
};

Geometry draw_geometry(double s, SeededRng& rng) {
  Geometry g{};
  g.cx = s / 2 + rng.uniform(-0.03, 0.03) * s;
  g.cy = s / 2 + rng.uniform(-0.03, 0.03) * s;
  g.ax = s * rng.uniform(0.36, 0.40);
  g.ay = s * rng.uniform(0.42, 0.46);
  g.radius = s * rng.uniform(0.070, 0.080);
  g.blob_dx = s * rng.uniform(0.12, 0.14);
  g.blob_y = g.cy + g.ay * rng.uniform(0.20, 0.26);
  g.band_narrow = s * rng.uniform(0.028, 0.034);
  g.band_wide = s * rng.uniform(0.070, 0.080);
  g.band_top = g.cy - g.ay * rng.uniform(0.38, 0.44);
  g.band_bottom = g.blob_y - g.radius - 1.0;
  return g;
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

// 0 outside, 1 = surround, 2 = comma blob. side = -1 (left) or +1 (right).
int blob_zone(const Geometry& g, double x, double y, int side) {
  const double bx = g.cx + side * g.blob_dx;
  const double by = g.blob_y;
  const double r = g.radius;
  if (std::hypot(x - bx, y - by) > r) return 0;
  const bool head = std::hypot(x - bx, y - (by - 0.15 * r)) <= 0.5 * r;
  const bool tail = dist_to_segment(x, y, bx, by, bx + side * 0.45 * r, by + 0.65 * r) <= 0.22 * r;
  return head || tail ? 2 : 1;
}

bool in_brain(const Geometry& g, double x, double y) {
  const double u = (x - g.cx) / g.ax, v = (y - g.cy) / g.ay;
  return u * u + v * v <= 1.0;
}

bool in_band(const Geometry& g, double x, double y, double half_width) {
  return y >= g.band_top && y <= g.band_bottom && std::abs(x - g.cx) <= half_width;
}

void check(const PhantomParams& p) {
  if (p.size < 32) throw std::invalid_argument("phantom size must be >= 32");
  if (!(p.noise_std >= 0.0) || !std::isfinite(p.noise_std)) {
    throw std::invalid_argument("phantom noise_std must be finite and >= 0");
  }
}

}  // namespace

std::vector<std::uint8_t> phantom_blob_mask(const PhantomParams& params) {
  check(params);
  SeededRng rng(params.seed);
  const Geometry g = draw_geometry(static_cast<double>(params.size), rng);
  const std::size_t n = params.size;
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (blob_zone(g, px, py, -1) || blob_zone(g, px, py, +1)) mask[y * n + x] = 1;
    }
  }
  return mask;
}

Image generate_phantom(const PhantomParams& params) {
  check(params);
  SeededRng rng(params.seed);
  const std::size_t n = params.size;
  const Geometry g = draw_geometry(static_cast<double>(n), rng);

  std::vector<double> value(n * n, 0.0);
  std::vector<std::uint8_t> brain(n * n, 0);
  std::vector<int> zone(n * n, 0);  // blob zone, side encoded as sign
  std::size_t narrow_count = 0, wide_count = 0;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const std::size_t i = y * n + x;
      if (!in_brain(g, px, py)) continue;
      brain[i] = 1;
      value[i] = kBrain;
      narrow_count += in_band(g, px, py, g.band_narrow);
      wide_count += in_band(g, px, py, g.band_wide);
      if (int z = blob_zone(g, px, py, -1)) zone[i] = -z;
      if (int z = blob_zone(g, px, py, +1)) zone[i] = z;
    }
  }

  // Midline band; the wide band is lighter so its summed deficit matches.
  const bool msa = params.label == ClassLabel::MSA;
  const double half = msa ? g.band_wide : g.band_narrow;
  const double band_value =
      msa && wide_count > 0
          ? std::round(kBrain - (kBrain - kBand) * static_cast<double>(narrow_count) /
                                    static_cast<double>(wide_count))
          : kBand;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t i = y * n + x;
      if (brain[i] && in_band(g, x + 0.5, y + 0.5, half)) value[i] = band_value;
    }
  }

  // Blob regions.
  for (int side : {-1, 1}) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
      if (zone[i] != 0 && (zone[i] > 0) == (side > 0)) {
        value[i] = std::abs(zone[i]) == 2 ? kBlob : kSurround;
        sum += value[i];
        ++count;
      }
    }
    if (params.label == ClassLabel::PD && count > 0) {
      const double mean = std::round(sum / static_cast<double>(count));
      for (std::size_t i = 0; i < n * n; ++i) {
        if (zone[i] != 0 && (zone[i] > 0) == (side > 0)) value[i] = mean;
      }
    }
  }

  // Noise inside the brain, drawn for every brain pixel in raster order.
  if (params.noise_std > 0.0) {
    std::vector<double> noise(n * n, 0.0);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
      if (!brain[i]) continue;
      noise[i] = rng.gaussian(0.0, params.noise_std);
      sum += noise[i];
      ++count;
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
      if (brain[i]) value[i] += noise[i] - mean;
    }
  }

  Image img(ImageDims{n, n});
  for (std::size_t i = 0; i < n * n; ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(value[i]), 0L, 255L));
  }
  return img;
}

DatasetManifest generate_dataset(std::size_t per_class, const fs::path& out_dir,
                                 std::uint64_t seed, std::size_t size, double noise_std) {
  if (per_class == 0) throw std::invalid_argument("generate_dataset: per_class must be >= 1");
  check(PhantomParams{size, noise_std, seed, ClassLabel::PD});
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw std::runtime_error("cannot create output directory '" + out_dir.string() + "'");
  }

  const std::size_t total = 3 * per_class;
  std::vector<Image> images(total);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(total); ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const ClassLabel label = kAllLabels[idx / per_class];
    const std::uint64_t stream = (static_cast<std::uint64_t>(label) << 32) | (idx % per_class);
    images[idx] = generate_phantom(PhantomParams{size, noise_std, mix_seed(seed, stream), label});
  }

  DatasetManifest m;
  m.base_dir = out_dir;
  for (std::size_t idx = 0; idx < total; ++idx) {
    const ClassLabel label = kAllLabels[idx / per_class];
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.pgm", std::string(to_string(label)).c_str(),
                  idx % per_class);
    write_pgm(images[idx], out_dir / name);
    m.rows.push_back({name, label, Split::none});
  }
  return m;
}

}  // namespace mrinet
