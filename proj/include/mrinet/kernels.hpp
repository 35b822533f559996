#pragma once

// Compute kernels shared by the layers. The default namespace holds the
// OpenMP-parallel versions; `reference` holds plain serial loops kept for
// testing and benchmarking. Every parallel kernel partitions work over
// independent outputs and keeps each output's accumulation in the same order
// as its reference counterpart, so results do not depend on thread count.

#include <cstddef>
#include <span>

namespace mrinet::kernels {

struct ConvGeom {
  std::size_t channels, height, width;      // input sample
  std::size_t kernel_h, kernel_w;
  std::size_t stride_h, stride_w;
  std::size_t pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

// C[m x n] (+)= A[m x k] * B[k x n]; each C[i][j] accumulates over p ascending.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[m x n] (+)= A^T * B with A stored [k x m].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[m x n] (+)= A * B^T with B stored [n x k].
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

// One sample [C,H,W] -> columns [C*kh*kw, out_h*out_w]; padding reads as 0.
void im2col(const ConvGeom& g, const double* image, double* columns);
// Adds columns back into an image buffer (which the caller zeroes).
void col2im(const ConvGeom& g, const double* columns, double* image);

// x [N,C,H,W], w [O,C,kh,kw], b [O] -> y [N,O,out_h,out_w].
void conv2d_forward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                    const double* x, const double* w, const double* b, double* y);
// Gradients of the above. dx, dw, db are overwritten.
void conv2d_backward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                     const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db);

namespace reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

// Direct nested-loop convolution, no im2col.
void conv2d_forward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                    const double* x, const double* w, const double* b, double* y);
void conv2d_backward(std::size_t batch, std::size_t out_channels, const ConvGeom& g,
                     const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db);

}  // namespace reference

}  // namespace mrinet::kernels
