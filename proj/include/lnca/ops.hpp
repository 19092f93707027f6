#pragma once

// Differentiable operators. Each op computes its value eagerly and, when a
// tape is active and some input requires a gradient, records its backward
// step on that tape. Scalars are tensors of shape [1].

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lnca/autodiff.hpp"
#include "lnca/kernels.hpp"

namespace lnca::inline LNCA_PRECISION {

enum class Mode { kTrain, kEval };
enum class Activation { kSwish, kGelu, kSigmoid };
enum class NormKind { kBatch, kLayer };

inline constexpr real kNormEpsilon = real(1e-5);

/// Running statistics owned by a batch-norm layer.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    bool initialized = false;
    real momentum = real(0.9);
};

/// Cross-correlation of BHWC input with a KhKwCinCout kernel. `bias` may be an
/// undefined Var.
Var conv2d(const Var& x, const Var& kernel, const Var& bias, int stride, Padding padding);

/// Adjoint of conv2d under the same kernel, stride and padding. The kernel is
/// laid out as the conv2d it transposes: [Kh, Kw, Cout, Cin] where Cin is the
/// channel count of `x`. Zero padding maps HxW to (H*stride)x(W*stride).
Var conv_transpose2d(const Var& x, const Var& kernel, const Var& bias, int stride,
                     Padding padding = Padding::kZero);

/// Batch norm over (B,H,W) per channel. Train mode normalises with batch
/// statistics and updates `stats`; eval mode uses the running statistics.
Var batch_norm(const Var& x, const Var& scale, const Var& shift, BatchNormStats& stats, Mode mode);
/// Layer norm over the channel axis of every cell.
Var layer_norm(const Var& x, const Var& scale, const Var& shift);
/// Dispatches on kind; `stats` is required for batch norm only.
Var normalize(const Var& x, NormKind kind, const Var& scale, const Var& shift, BatchNormStats* stats,
              Mode mode);

Var activation(const Var& x, Activation kind);
Var relu(const Var& x);

/// Multi-head attention where each cell's query sees only the keys/values of
/// its 3x3 Moore neighbourhood (cells outside the lattice are masked out).
Var attention_local(const Var& q, const Var& k, const Var& v, int heads);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Hadamard product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real factor);
/// Multiplies every channel of cell (b,h,w) by s[b,h,w,0].
Var scale_cells(const Var& x, const Var& s);

Var mse(const Var& a, const Var& b);
/// Mean over all elements of |x - clip(x, lo, hi)|.
Var l1_clip_norm(const Var& x, real lo, real hi);
Var mean_all(const Var& x);
/// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const real> weights);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count);
/// Splits the channel axis into two equal halves.
std::pair<Var, Var> split_channels(const Var& x);
Var concat_batch(std::span<const Var> parts);
Var slice_batch(const Var& x, std::int64_t begin, std::int64_t count);

/// Inverted dropout; identity in eval mode.
Var dropout(const Var& x, real keep_probability, Mode mode, std::uint64_t seed);

/// Channel-split elementwise product: [a | b] -> a * b.
Var simple_gate(const Var& x);

}  // namespace lnca
