#pragma once

// Compute kernels behind the differentiable ops. Everything in
// lnca::kernels is OpenMP-parallel over independent output rows/cells, so
// results do not depend on the thread count. lnca::reference holds direct
// serial loops for the same contracts; it is used by the test suite and the
// kernel benchmark only.

#include <cstdint>

#include "lnca/tensor.hpp"

namespace lnca::inline LNCA_PRECISION {

enum class Padding { kZero, kNone };

/// Geometry of a 2-D cross-correlation on BHWC data with a KhKwCinCout kernel.
struct ConvGeometry {
    std::int64_t batch = 1;
    std::int64_t in_h = 1, in_w = 1, in_c = 1;
    std::int64_t out_h = 1, out_w = 1, out_c = 1;
    std::int64_t kernel_h = 1, kernel_w = 1;
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    /// Forward geometry: output extent floor((H + 2p - K)/stride) + 1.
    static ConvGeometry forward(const Shape& input, const Shape& kernel, std::int64_t stride,
                                Padding padding);
    /// Geometry of the conv whose adjoint maps `input` (its output space) back to
    /// an image of extent H*stride (zero padding) or (H-1)*stride + K (none).
    static ConvGeometry transposed(const Shape& input, const Shape& kernel, std::int64_t stride,
                                   Padding padding);

    std::int64_t patch() const { return kernel_h * kernel_w * in_c; }
};

namespace kernels {

/// C[M,N] (+)= A[M,K] * B[K,N], all row-major and contiguous.
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
          bool accumulate);
/// C[M,N] (+)= A^T * B with A stored [K,M].
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
             bool accumulate);
/// C[M,N] (+)= A * B^T with B stored [N,K].
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
             bool accumulate);

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y);
/// Overwrites dx with the input gradient (the transposed convolution of dy).
void conv2d_backward_input(const ConvGeometry& g, const real* dy, const real* w, real* dx);
/// Accumulates the kernel gradient into dw.
void conv2d_backward_kernel(const ConvGeometry& g, const real* x, const real* dy, real* dw);

/// Localized multi-head attention over the 3x3 Moore neighbourhood of each cell.
/// Out-of-lattice neighbours are excluded from the softmax. `weights` receives
/// [B,H,W,heads,9] attention probabilities (0 for excluded neighbours).
void attention_forward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                       real* out, real* weights);
void attention_backward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                        const real* weights, const real* dout, real* dq, real* dk, real* dv);

/// Per-cell normalisation over the last axis. Saves xhat and 1/std per row.
void layer_norm_forward(std::int64_t rows, std::int64_t cols, const real* x, const real* gamma,
                        const real* beta, real eps, real* y, real* xhat, real* inv_std);
void layer_norm_backward(std::int64_t rows, std::int64_t cols, const real* dy, const real* xhat,
                         const real* inv_std, const real* gamma, real* dx, real* dgamma,
                         real* dbeta);

}  // namespace kernels

namespace reference {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c);
void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y);
void conv2d_backward_input(const ConvGeometry& g, const real* dy, const real* w, real* dx);
void conv2d_backward_kernel(const ConvGeometry& g, const real* x, const real* dy, real* dw);
void attention_forward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                       real* out);

}  // namespace reference

}  // namespace lnca
