#include "lnca/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lnca::inline LNCA_PRECISION {

ConvGeometry ConvGeometry::forward(const Shape& input, const Shape& kernel, std::int64_t stride,
                                   Padding padding) {
    if (input.size() != 4 || kernel.size() != 4)
        throw std::invalid_argument("conv2d expects BHWC input and KhKwCinCout kernel");
    if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
    if (kernel[2] != input[3])
        throw std::invalid_argument("conv2d channel mismatch: input " + shape_str(input) + " kernel " +
                                    shape_str(kernel));
    ConvGeometry g;
    g.batch = input[0];
    g.in_h = input[1];
    g.in_w = input[2];
    g.in_c = input[3];
    g.kernel_h = kernel[0];
    g.kernel_w = kernel[1];
    g.out_c = kernel[3];
    g.stride = stride;
    g.pad = padding == Padding::kZero ? (kernel[0] - 1) / 2 : 0;
    const std::int64_t span_h = g.in_h + 2 * g.pad - g.kernel_h;
    const std::int64_t span_w = g.in_w + 2 * g.pad - g.kernel_w;
    if (span_h < 0 || span_w < 0) throw std::invalid_argument("conv2d kernel larger than padded input");
    g.out_h = span_h / stride + 1;
    g.out_w = span_w / stride + 1;
    return g;
}

ConvGeometry ConvGeometry::transposed(const Shape& input, const Shape& kernel, std::int64_t stride,
                                      Padding padding) {
    if (input.size() != 4 || kernel.size() != 4)
        throw std::invalid_argument("conv_transpose2d expects BHWC input and KhKwCoutCin kernel");
    if (stride < 1) throw std::invalid_argument("conv_transpose2d stride must be >= 1");
    if (kernel[3] != input[3])
        throw std::invalid_argument("conv_transpose2d channel mismatch: input " + shape_str(input) +
                                    " kernel " + shape_str(kernel));
    ConvGeometry g;
    g.batch = input[0];
    g.out_h = input[1];
    g.out_w = input[2];
    g.out_c = input[3];
    g.kernel_h = kernel[0];
    g.kernel_w = kernel[1];
    g.in_c = kernel[2];
    g.stride = stride;
    if (padding == Padding::kZero) {
        g.pad = (kernel[0] - 1) / 2;
        g.in_h = g.out_h * stride;
        g.in_w = g.out_w * stride;
    } else {
        g.pad = 0;
        g.in_h = (g.out_h - 1) * stride + g.kernel_h;
        g.in_w = (g.out_w - 1) * stride + g.kernel_w;
    }
    return g;
}

namespace kernels {

namespace {

constexpr std::int64_t kRowBlock = 4;
constexpr std::int64_t kColBlock = 64 / static_cast<std::int64_t>(sizeof(real)) * 2;

// Four rows of C against a kColBlock-wide column panel, accumulators held in
// registers across the whole k loop.
inline void panel_4(std::int64_t k, const real* a, std::int64_t lda, const real* b, std::int64_t ldb,
                    real* c, std::int64_t ldc, bool accumulate) {
    real acc[kRowBlock][kColBlock];
    for (std::int64_t r = 0; r < kRowBlock; ++r)
        for (std::int64_t j = 0; j < kColBlock; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : real(0);
    for (std::int64_t p = 0; p < k; ++p) {
        const real* brow = b + p * ldb;
        const real a0 = a[p], a1 = a[lda + p], a2 = a[2 * lda + p], a3 = a[3 * lda + p];
#pragma omp simd
        for (std::int64_t j = 0; j < kColBlock; ++j) {
            acc[0][j] += a0 * brow[j];
            acc[1][j] += a1 * brow[j];
            acc[2][j] += a2 * brow[j];
            acc[3][j] += a3 * brow[j];
        }
    }
    for (std::int64_t r = 0; r < kRowBlock; ++r)
        for (std::int64_t j = 0; j < kColBlock; ++j) c[r * ldc + j] = acc[r][j];
}

inline void panel_generic(std::int64_t rows, std::int64_t cols, std::int64_t k, const real* a,
                          std::int64_t lda, const real* b, std::int64_t ldb, real* c, std::int64_t ldc,
                          bool accumulate) {
    for (std::int64_t r = 0; r < rows; ++r) {
        real* crow = c + r * ldc;
        if (!accumulate) std::fill(crow, crow + cols, real(0));
        const real* arow = a + r * lda;
        for (std::int64_t p = 0; p < k; ++p) {
            const real av = arow[p];
            const real* brow = b + p * ldb;
#pragma omp simd
            for (std::int64_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
        }
    }
}

std::vector<real> transpose_copy(std::int64_t rows, std::int64_t cols, const real* src) {
    std::vector<real> out(static_cast<std::size_t>(rows * cols));
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) out[static_cast<std::size_t>(c * rows + r)] = src[r * cols + c];
    return out;
}

}  // namespace

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
          bool accumulate) {
    if (m <= 0 || n <= 0) return;
    const std::int64_t row_blocks = (m + kRowBlock - 1) / kRowBlock;
    const std::int64_t full_cols = n - n % kColBlock;
#pragma omp parallel for schedule(static)
    for (std::int64_t rb = 0; rb < row_blocks; ++rb) {
        const std::int64_t i0 = rb * kRowBlock;
        const std::int64_t rows = std::min(kRowBlock, m - i0);
        const real* arow = a + i0 * k;
        real* crow = c + i0 * n;
        if (rows == kRowBlock) {
            for (std::int64_t j0 = 0; j0 < full_cols; j0 += kColBlock)
                panel_4(k, arow, k, b + j0, n, crow + j0, n, accumulate);
            if (full_cols < n)
                panel_generic(rows, n - full_cols, k, arow, k, b + full_cols, n, crow + full_cols, n,
                              accumulate);
        } else {
            panel_generic(rows, n, k, arow, k, b, n, crow, n, accumulate);
        }
    }
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
             bool accumulate) {
    const std::vector<real> at = transpose_copy(k, m, a);
    gemm(m, n, k, at.data(), b, c, accumulate);
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c,
             bool accumulate) {
    const std::vector<real> bt = transpose_copy(n, k, b);
    gemm(m, n, k, a, bt.data(), c, accumulate);
}

namespace {

bool is_pointwise(const ConvGeometry& g) {
    return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

// Patch matrix of one image: [out_h*out_w, kh*kw*in_c], zeros outside the lattice.
void im2col(const ConvGeometry& g, const real* x, real* cols) {
    const std::int64_t patch = g.patch();
#pragma omp parallel for schedule(static)
    for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            real* dst = cols + (oy * g.out_w + ox) * patch;
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
                const std::int64_t iy = oy * g.stride + ky - g.pad;
                for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                    const std::int64_t ix = ox * g.stride + kx - g.pad;
                    real* d = dst + (ky * g.kernel_w + kx) * g.in_c;
                    if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
                        std::fill(d, d + g.in_c, real(0));
                    } else {
                        std::memcpy(d, x + (iy * g.in_w + ix) * g.in_c, sizeof(real) * g.in_c);
                    }
                }
            }
        }
    }
}

// Gather form of the patch-matrix adjoint: every input cell sums the patch
// entries that read it, so rows are independent.
void col2im(const ConvGeometry& g, const real* cols, real* dx) {
    const std::int64_t patch = g.patch();
#pragma omp parallel for schedule(static)
    for (std::int64_t iy = 0; iy < g.in_h; ++iy) {
        for (std::int64_t ix = 0; ix < g.in_w; ++ix) {
            real* d = dx + (iy * g.in_w + ix) * g.in_c;
            std::fill(d, d + g.in_c, real(0));
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
                const std::int64_t ny = iy + g.pad - ky;
                if (ny < 0 || ny % g.stride != 0) continue;
                const std::int64_t oy = ny / g.stride;
                if (oy >= g.out_h) continue;
                for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                    const std::int64_t nx = ix + g.pad - kx;
                    if (nx < 0 || nx % g.stride != 0) continue;
                    const std::int64_t ox = nx / g.stride;
                    if (ox >= g.out_w) continue;
                    const real* s = cols + (oy * g.out_w + ox) * patch + (ky * g.kernel_w + kx) * g.in_c;
                    for (std::int64_t c = 0; c < g.in_c; ++c) d[c] += s[c];
                }
            }
        }
    }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y) {
    const std::int64_t out_cells = g.out_h * g.out_w;
    if (is_pointwise(g)) {
        gemm(g.batch * out_cells, g.out_c, g.in_c, x, w, y, false);
    } else {
        std::vector<real> cols(static_cast<std::size_t>(out_cells * g.patch()));
        for (std::int64_t b = 0; b < g.batch; ++b) {
            im2col(g, x + b * g.in_h * g.in_w * g.in_c, cols.data());
            gemm(out_cells, g.out_c, g.patch(), cols.data(), w, y + b * out_cells * g.out_c, false);
        }
    }
    if (bias != nullptr) {
        const std::int64_t rows = g.batch * out_cells;
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            real* yr = y + r * g.out_c;
            for (std::int64_t c = 0; c < g.out_c; ++c) yr[c] += bias[c];
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, const real* dy, const real* w, real* dx) {
    const std::int64_t out_cells = g.out_h * g.out_w;
    if (is_pointwise(g)) {
        gemm_nt(g.batch * out_cells, g.in_c, g.out_c, dy, w, dx, false);
        return;
    }
    const std::vector<real> wt = transpose_copy(g.patch(), g.out_c, w);
    std::vector<real> cols(static_cast<std::size_t>(out_cells * g.patch()));
    for (std::int64_t b = 0; b < g.batch; ++b) {
        gemm(out_cells, g.patch(), g.out_c, dy + b * out_cells * g.out_c, wt.data(), cols.data(), false);
        col2im(g, cols.data(), dx + b * g.in_h * g.in_w * g.in_c);
    }
}

void conv2d_backward_kernel(const ConvGeometry& g, const real* x, const real* dy, real* dw) {
    const std::int64_t out_cells = g.out_h * g.out_w;
    if (is_pointwise(g)) {
        gemm_tn(g.in_c, g.out_c, g.batch * out_cells, x, dy, dw, true);
        return;
    }
    std::vector<real> cols(static_cast<std::size_t>(out_cells * g.patch()));
    for (std::int64_t b = 0; b < g.batch; ++b) {
        im2col(g, x + b * g.in_h * g.in_w * g.in_c, cols.data());
        gemm_tn(g.patch(), g.out_c, out_cells, cols.data(), dy + b * out_cells * g.out_c, dw, true);
    }
}

namespace {
constexpr int kNeighbors = 9;
}

void attention_forward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                       real* out, real* weights) {
    const std::int64_t e = d.c;
    const std::int64_t hd = e / heads;
    const real scale = real(1) / std::sqrt(static_cast<real>(hd));
    const std::int64_t cells = d.cells();
#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        const std::int64_t x = cell % d.w;
        const std::int64_t y = (cell / d.w) % d.h;
        const std::int64_t base = cell - y * d.w - x;
        std::int64_t nb[kNeighbors];
        for (int j = 0; j < kNeighbors; ++j) {
            const std::int64_t ny = y + j / 3 - 1, nx = x + j % 3 - 1;
            nb[j] = (ny < 0 || ny >= d.h || nx < 0 || nx >= d.w) ? -1 : base + ny * d.w + nx;
        }
        const real* qc = q + cell * e;
        real* oc = out + cell * e;
        real* wc = weights + cell * heads * kNeighbors;
        for (int h = 0; h < heads; ++h) {
            const std::int64_t off = h * hd;
            real score[kNeighbors];
            real mx = -std::numeric_limits<real>::infinity();
            for (int j = 0; j < kNeighbors; ++j) {
                if (nb[j] < 0) continue;
                const real* kj = k + nb[j] * e + off;
                real s = 0;
                for (std::int64_t t = 0; t < hd; ++t) s += qc[off + t] * kj[t];
                score[j] = s * scale;
                mx = std::max(mx, score[j]);
            }
            real z = 0;
            for (int j = 0; j < kNeighbors; ++j) {
                score[j] = nb[j] < 0 ? real(0) : std::exp(score[j] - mx);
                z += score[j];
            }
            for (std::int64_t t = 0; t < hd; ++t) oc[off + t] = 0;
            for (int j = 0; j < kNeighbors; ++j) {
                const real a = score[j] / z;
                wc[h * kNeighbors + j] = a;
                if (nb[j] < 0) continue;
                const real* vj = v + nb[j] * e + off;
                for (std::int64_t t = 0; t < hd; ++t) oc[off + t] += a * vj[t];
            }
        }
    }
}

void attention_backward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                        const real* weights, const real* dout, real* dq, real* dk, real* dv) {
    const std::int64_t e = d.c;
    const std::int64_t hd = e / heads;
    const real scale = real(1) / std::sqrt(static_cast<real>(hd));
    const std::int64_t cells = d.cells();
    // Score gradients per (cell, head, neighbour); dk/dv are then gathered so
    // that every cell owns its own output rows.
    std::vector<real> dscore(static_cast<std::size_t>(cells * heads * kNeighbors));

    auto neighbour = [&](std::int64_t cell, int j) -> std::int64_t {
        const std::int64_t x = cell % d.w;
        const std::int64_t y = (cell / d.w) % d.h;
        const std::int64_t ny = y + j / 3 - 1, nx = x + j % 3 - 1;
        if (ny < 0 || ny >= d.h || nx < 0 || nx >= d.w) return -1;
        return cell + (j / 3 - 1) * d.w + (j % 3 - 1);
    };

#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        const real* go = dout + cell * e;
        const real* wc = weights + cell * heads * kNeighbors;
        real* dqc = dq + cell * e;
        real* ds = dscore.data() + cell * heads * kNeighbors;
        for (std::int64_t t = 0; t < e; ++t) dqc[t] = 0;
        for (int h = 0; h < heads; ++h) {
            const std::int64_t off = h * hd;
            real da[kNeighbors];
            real dot = 0;
            for (int j = 0; j < kNeighbors; ++j) {
                const std::int64_t n = neighbour(cell, j);
                da[j] = 0;
                if (n < 0) continue;
                const real* vj = v + n * e + off;
                for (std::int64_t t = 0; t < hd; ++t) da[j] += go[off + t] * vj[t];
                dot += wc[h * kNeighbors + j] * da[j];
            }
            for (int j = 0; j < kNeighbors; ++j) {
                const std::int64_t n = neighbour(cell, j);
                const real g = n < 0 ? real(0) : wc[h * kNeighbors + j] * (da[j] - dot) * scale;
                ds[h * kNeighbors + j] = g;
                if (n < 0) continue;
                const real* kj = k + n * e + off;
                for (std::int64_t t = 0; t < hd; ++t) dqc[off + t] += g * kj[t];
            }
        }
    }

#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        real* dkc = dk + cell * e;
        real* dvc = dv + cell * e;
        for (std::int64_t t = 0; t < e; ++t) dkc[t] = dvc[t] = 0;
        // Cell `cell` is neighbour j of source m = cell - offset(j).
        for (int j = 0; j < kNeighbors; ++j) {
            const std::int64_t m = neighbour(cell, 8 - j);
            if (m < 0) continue;
            const real* qm = q + m * e;
            const real* gm = dout + m * e;
            const real* wm = weights + m * heads * kNeighbors;
            const real* dsm = dscore.data() + m * heads * kNeighbors;
            for (int h = 0; h < heads; ++h) {
                const std::int64_t off = h * hd;
                const real a = wm[h * kNeighbors + j];
                const real g = dsm[h * kNeighbors + j];
                for (std::int64_t t = 0; t < hd; ++t) {
                    dkc[off + t] += g * qm[off + t];
                    dvc[off + t] += a * gm[off + t];
                }
            }
        }
    }
}

void layer_norm_forward(std::int64_t rows, std::int64_t cols, const real* x, const real* gamma,
                        const real* beta, real eps, real* y, real* xhat, real* inv_std) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* xr = x + r * cols;
        real mean = 0;
        for (std::int64_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= static_cast<real>(cols);
        real var = 0;
        for (std::int64_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<real>(cols);
        const real is = real(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        real* hr = xhat + r * cols;
        real* yr = y + r * cols;
        for (std::int64_t c = 0; c < cols; ++c) {
            hr[c] = (xr[c] - mean) * is;
            yr[c] = hr[c] * gamma[c] + beta[c];
        }
    }
}

void layer_norm_backward(std::int64_t rows, std::int64_t cols, const real* dy, const real* xhat,
                         const real* inv_std, const real* gamma, real* dx, real* dgamma,
                         real* dbeta) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* g = dy + r * cols;
        const real* h = xhat + r * cols;
        real mean_g = 0, mean_gh = 0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const real gh = g[c] * gamma[c];
            mean_g += gh;
            mean_gh += gh * h[c];
        }
        mean_g /= static_cast<real>(cols);
        mean_gh /= static_cast<real>(cols);
        real* dxr = dx + r * cols;
        for (std::int64_t c = 0; c < cols; ++c)
            dxr[c] = inv_std[r] * (g[c] * gamma[c] - mean_g - h[c] * mean_gh);
    }
    // Column reductions stay serial over rows so the summation order is fixed.
    if (dgamma != nullptr || dbeta != nullptr) {
#pragma omp parallel for schedule(static)
        for (std::int64_t c = 0; c < cols; ++c) {
            real sg = 0, sb = 0;
            for (std::int64_t r = 0; r < rows; ++r) {
                sg += dy[r * cols + c] * xhat[r * cols + c];
                sb += dy[r * cols + c];
            }
            if (dgamma) dgamma[c] += sg;
            if (dbeta) dbeta[c] += sb;
        }
    }
}

}  // namespace kernels

namespace reference {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            real s = 0;
            for (std::int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y) {
    for (std::int64_t b = 0; b < g.batch; ++b)
        for (std::int64_t oy = 0; oy < g.out_h; ++oy)
            for (std::int64_t ox = 0; ox < g.out_w; ++ox)
                for (std::int64_t co = 0; co < g.out_c; ++co) {
                    real s = bias ? bias[co] : real(0);
                    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                            const std::int64_t iy = oy * g.stride + ky - g.pad;
                            const std::int64_t ix = ox * g.stride + kx - g.pad;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            for (std::int64_t ci = 0; ci < g.in_c; ++ci)
                                s += x[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] *
                                     w[((ky * g.kernel_w + kx) * g.in_c + ci) * g.out_c + co];
                        }
                    y[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = s;
                }
}

void conv2d_backward_input(const ConvGeometry& g, const real* dy, const real* w, real* dx) {
    std::fill(dx, dx + g.batch * g.in_h * g.in_w * g.in_c, real(0));
    for (std::int64_t b = 0; b < g.batch; ++b)
        for (std::int64_t oy = 0; oy < g.out_h; ++oy)
            for (std::int64_t ox = 0; ox < g.out_w; ++ox)
                for (std::int64_t co = 0; co < g.out_c; ++co) {
                    const real go = dy[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
                    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                            const std::int64_t iy = oy * g.stride + ky - g.pad;
                            const std::int64_t ix = ox * g.stride + kx - g.pad;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            for (std::int64_t ci = 0; ci < g.in_c; ++ci)
                                dx[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] +=
                                    go * w[((ky * g.kernel_w + kx) * g.in_c + ci) * g.out_c + co];
                        }
                }
}

void conv2d_backward_kernel(const ConvGeometry& g, const real* x, const real* dy, real* dw) {
    for (std::int64_t b = 0; b < g.batch; ++b)
        for (std::int64_t oy = 0; oy < g.out_h; ++oy)
            for (std::int64_t ox = 0; ox < g.out_w; ++ox)
                for (std::int64_t co = 0; co < g.out_c; ++co) {
                    const real go = dy[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
                    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                            const std::int64_t iy = oy * g.stride + ky - g.pad;
                            const std::int64_t ix = ox * g.stride + kx - g.pad;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            for (std::int64_t ci = 0; ci < g.in_c; ++ci)
                                dw[((ky * g.kernel_w + kx) * g.in_c + ci) * g.out_c + co] +=
                                    go * x[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + ci];
                        }
                }
}

void attention_forward(const Dims4& d, int heads, const real* q, const real* k, const real* v,
                       real* out) {
    const std::int64_t e = d.c, hd = e / heads;
    for (std::int64_t b = 0; b < d.b; ++b)
        for (std::int64_t y = 0; y < d.h; ++y)
            for (std::int64_t x = 0; x < d.w; ++x) {
                const std::int64_t cell = (b * d.h + y) * d.w + x;
                for (int h = 0; h < heads; ++h) {
                    std::vector<std::int64_t> nbrs;
                    std::vector<double> s;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const std::int64_t ny = y + dy, nx = x + dx;
                            if (ny < 0 || ny >= d.h || nx < 0 || nx >= d.w) continue;
                            const std::int64_t n = (b * d.h + ny) * d.w + nx;
                            double dot = 0;
                            for (std::int64_t t = 0; t < hd; ++t)
                                dot += double(q[cell * e + h * hd + t]) * k[n * e + h * hd + t];
                            nbrs.push_back(n);
                            s.push_back(dot / std::sqrt(double(hd)));
                        }
                    const double mx = *std::max_element(s.begin(), s.end());
                    double z = 0;
                    for (double& si : s) z += (si = std::exp(si - mx));
                    for (std::int64_t t = 0; t < hd; ++t) {
                        double acc = 0;
                        for (std::size_t j = 0; j < nbrs.size(); ++j) acc += s[j] / z * v[nbrs[j] * e + h * hd + t];
                        out[cell * e + h * hd + t] = static_cast<real>(acc);
                    }
                }
            }
}

}  // namespace reference

}  // namespace lnca
