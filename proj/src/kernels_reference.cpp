#include <algorithm>

#include "mrinet/kernels.hpp"

namespace mrinet::kernels::reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

namespace {

// Input coordinate for output index i and kernel offset u, or -1 if it falls in padding.
std::ptrdiff_t source_index(std::size_t i, std::size_t u, std::size_t stride, std::size_t pad,
                            std::size_t extent) {
  const auto pos = static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad);
  return (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) ? -1 : pos;
}

}  // namespace

void conv2d_forward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                    const double* x, const double* w, const double* b, double* y) {
  const std::size_t hw = g.height * g.width;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (std::size_t i = 0; i < g.out_h; ++i) {
        for (std::size_t j = 0; j < g.out_w; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t u = 0; u < g.kernel_h; ++u) {
              const auto yy = source_index(i, u, g.stride_h, g.pad_h, g.height);
              if (yy < 0) continue;
              for (std::size_t v = 0; v < g.kernel_w; ++v) {
                const auto xx = source_index(j, v, g.stride_w, g.pad_w, g.width);
                if (xx < 0) continue;
                acc += x[(n * g.channels + c) * hw + yy * g.width + xx] *
                       w[((o * g.channels + c) * g.kernel_h + u) * g.kernel_w + v];
              }
            }
          }
          y[((n * out_channels + o) * g.out_h + i) * g.out_w + j] = acc + b[o];
        }
      }
    }
  }
}

void conv2d_backward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                     const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db) {
  const std::size_t hw = g.height * g.width;
  std::fill(dx, dx + batch * g.channels * hw, 0.0);
  std::fill(dw, dw + out_channels * g.patch(), 0.0);
  std::fill(db, db + out_channels, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (std::size_t i = 0; i < g.out_h; ++i) {
        for (std::size_t j = 0; j < g.out_w; ++j) {
          const double grad = dy[((n * out_channels + o) * g.out_h + i) * g.out_w + j];
          db[o] += grad;
          for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t u = 0; u < g.kernel_h; ++u) {
              const auto yy = source_index(i, u, g.stride_h, g.pad_h, g.height);
              if (yy < 0) continue;
              for (std::size_t v = 0; v < g.kernel_w; ++v) {
                const auto xx = source_index(j, v, g.stride_w, g.pad_w, g.width);
                if (xx < 0) continue;
                const std::size_t xi = (n * g.channels + c) * hw + yy * g.width + xx;
                const std::size_t wi = ((o * g.channels + c) * g.kernel_h + u) * g.kernel_w + v;
                dx[xi] += grad * w[wi];
                dw[wi] += grad * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace mrinet::kernels::reference
