#include "mrinet/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace mrinet::kernels {

namespace {

constexpr std::size_t kColumnBlock = 512;

using Index = std::int64_t;

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      std::fill(crow, crow + n, 0.0);
    }
    const double* arow = a + i * k;
    for (std::size_t j0 = 0; j0 < n; j0 += kColumnBlock) {
      const std::size_t j1 = std::min(n, j0 + kColumnBlock);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) {
          crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      std::fill(crow, crow + n, 0.0);
    }
    for (std::size_t j0 = 0; j0 < n; j0 += kColumnBlock) {
      const std::size_t j1 = std::min(n, j0 + kColumnBlock);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        const double* brow = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) {
          crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    // Four independent dot products at a time; each keeps p ascending.
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      double s0 = accumulate ? crow[j] : 0.0;
      double s1 = accumulate ? crow[j + 1] : 0.0;
      double s2 = accumulate ? crow[j + 2] : 0.0;
      double s3 = accumulate ? crow[j + 3] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      crow[j] = s0;
      crow[j + 1] = s1;
      crow[j + 2] = s2;
      crow[j + 3] = s3;
    }
    for (; j < n; ++j) {
      const double* brow = b + j * k;
      double s = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += arow[p] * brow[p];
      }
      crow[j] = s;
    }
  }
}

void im2col(const ConvGeom& g, const double* image, double* columns) {
  const std::size_t positions = g.positions();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    const double* plane = image + ch * g.height * g.width;
    for (std::size_t u = 0; u < g.kernel_h; ++u) {
      for (std::size_t v = 0; v < g.kernel_w; ++v, ++row) {
        double* out = columns + row * positions;
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(i * g.stride_h + u) -
                         static_cast<std::ptrdiff_t>(g.pad_h);
          double* dst = out + i * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + y * g.width;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const auto x = static_cast<std::ptrdiff_t>(j * g.stride_w + v) -
                           static_cast<std::ptrdiff_t>(g.pad_w);
            dst[j] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[x];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const double* columns, double* image) {
  const std::size_t positions = g.positions();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    double* plane = image + ch * g.height * g.width;
    for (std::size_t u = 0; u < g.kernel_h; ++u) {
      for (std::size_t v = 0; v < g.kernel_w; ++v, ++row) {
        const double* in = columns + row * positions;
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(i * g.stride_h + u) -
                         static_cast<std::ptrdiff_t>(g.pad_h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            continue;
          }
          double* dst = plane + y * g.width;
          const double* src = in + i * g.out_w;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const auto x = static_cast<std::ptrdiff_t>(j * g.stride_w + v) -
                           static_cast<std::ptrdiff_t>(g.pad_w);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) {
              dst[x] += src[j];
            }
          }
        }
      }
    }
  }
}

void conv2d_forward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                    const double* x, const double* w, const double* b, double* y) {
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = out_channels * g.positions();
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
#pragma omp parallel
  {
    std::vector<double> columns(patch * positions);
#pragma omp for schedule(static)
    for (Index n = 0; n < static_cast<Index>(batch); ++n) {
      im2col(g, x + n * in_size, columns.data());
      double* yn = y + n * out_size;
      // Serial GEMM here: the batch loop already owns the threads.
      for (std::size_t o = 0; o < out_channels; ++o) {
        double* yrow = yn + o * positions;
        std::fill(yrow, yrow + positions, 0.0);
        const double* wrow = w + o * patch;
        for (std::size_t p = 0; p < patch; ++p) {
          const double wv = wrow[p];
          const double* crow = columns.data() + p * positions;
          for (std::size_t j = 0; j < positions; ++j) {
            yrow[j] += wv * crow[j];
          }
        }
        const double bias = b[o];
        for (std::size_t j = 0; j < positions; ++j) {
          yrow[j] += bias;
        }
      }
    }
  }
}

void conv2d_backward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                     const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db) {
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = out_channels * g.positions();
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();

  // Input gradient: independent per sample.
#pragma omp parallel
  {
    std::vector<double> dcolumns(patch * positions);
#pragma omp for schedule(static)
    for (Index n = 0; n < static_cast<Index>(batch); ++n) {
      const double* dyn = dy + n * out_size;
      std::fill(dcolumns.begin(), dcolumns.end(), 0.0);
      for (std::size_t o = 0; o < out_channels; ++o) {
        const double* wrow = w + o * patch;
        const double* grow = dyn + o * positions;
        for (std::size_t p = 0; p < patch; ++p) {
          const double wv = wrow[p];
          double* drow = dcolumns.data() + p * positions;
          for (std::size_t j = 0; j < positions; ++j) {
            drow[j] += wv * grow[j];
          }
        }
      }
      double* dxn = dx + n * in_size;
      std::fill(dxn, dxn + in_size, 0.0);
      col2im(g, dcolumns.data(), dxn);
    }
  }

  // Parameter gradients: samples in order, parallel over output channels.
  std::fill(dw, dw + out_channels * patch, 0.0);
  std::fill(db, db + out_channels, 0.0);
  std::vector<double> columns(patch * positions);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(g, x + n * in_size, columns.data());
    gemm_nt(out_channels, patch, positions, dy + n * out_size, columns.data(), dw, true);
    const double* dyn = dy + n * out_size;
    for (std::size_t o = 0; o < out_channels; ++o) {
      double s = db[o];
      const double* grow = dyn + o * positions;
      for (std::size_t j = 0; j < positions; ++j) {
        s += grow[j];
      }
      db[o] = s;
    }
  }
}

}  // namespace mrinet::kernels
