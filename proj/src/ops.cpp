#include "lnca/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lnca/rng.hpp"

namespace lnca::inline LNCA_PRECISION {

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make_output(Tensor value, const char* op, bool records) {
    value.check_finite(op);
    return Var(std::move(value), records);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

Tensor scalar(real v) { return Tensor(Shape{1}, v); }

template <typename F>
Tensor map(const Tensor& x, F&& f) {
    Tensor out(x.shape());
    const real* src = x.ptr();
    real* dst = out.ptr();
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(src[i]);
    return out;
}

inline real sigmoid(real z) { return real(1) / (real(1) + std::exp(-z)); }

}  // namespace

// ---------------------------------------------------------------- convolution

Var conv2d(const Var& x, const Var& kernel, const Var& bias, int stride, Padding padding) {
    const Shape& ks = kernel.shape();
    if (ks.size() != 4 || !((ks[0] == 1 && ks[1] == 1) || (ks[0] == 3 && ks[1] == 3)))
        throw std::invalid_argument("conv2d kernel must be 1x1 or 3x3, got " + shape_str(ks));
    const ConvGeometry g = ConvGeometry::forward(x.shape(), ks, stride, padding);
    if (bias.defined() && bias.value().numel() != g.out_c)
        throw std::invalid_argument("conv2d bias size does not match output channels");
    Tensor y(Shape{g.batch, g.out_h, g.out_w, g.out_c});
    kernels::conv2d_forward(g, x.value().ptr(), kernel.value().ptr(),
                            bias.defined() ? bias.value().ptr() : nullptr, y.ptr());
    const bool rec = Tape::recording({&x, &kernel, &bias});
    Var out = make_output(std::move(y), "conv2d", rec);
    if (rec) {
        Tape::active()->record([g, xn = x.node(), kn = kernel.node(), bn = bias.node(), on = out.node()] {
            if (on->grad.empty()) return;
            const real* gy = on->grad.ptr();
            if (xn->requires_grad) {
                Tensor dx(xn->value.shape());
                kernels::conv2d_backward_input(g, gy, kn->value.ptr(), dx.ptr());
                xn->accumulate_grad(dx);
            }
            if (kn->requires_grad) {
                Tensor dk(kn->value.shape());
                kernels::conv2d_backward_kernel(g, xn->value.ptr(), gy, dk.ptr());
                kn->accumulate_grad(dk);
            }
            if (bn && bn->requires_grad) {
                Tensor db(bn->value.shape());
                const std::int64_t rows = g.batch * g.out_h * g.out_w;
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < g.out_c; ++c) db[c] += gy[r * g.out_c + c];
                bn->accumulate_grad(db);
            }
        });
    }
    return out;
}

Var conv_transpose2d(const Var& x, const Var& kernel, const Var& bias, int stride, Padding padding) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv_transpose2d stride must be 1 or 2");
    const Shape& ks = kernel.shape();
    if (ks.size() != 4 || !((ks[0] == 1 && ks[1] == 1) || (ks[0] == 3 && ks[1] == 3)))
        throw std::invalid_argument("conv_transpose2d kernel must be 1x1 or 3x3, got " + shape_str(ks));
    const ConvGeometry g = ConvGeometry::transposed(x.shape(), ks, stride, padding);
    if (bias.defined() && bias.value().numel() != g.in_c)
        throw std::invalid_argument("conv_transpose2d bias size does not match output channels");
    Tensor y(Shape{g.batch, g.in_h, g.in_w, g.in_c});
    kernels::conv2d_backward_input(g, x.value().ptr(), kernel.value().ptr(), y.ptr());
    if (bias.defined()) {
        const std::int64_t rows = g.batch * g.in_h * g.in_w;
        const real* b = bias.value().ptr();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < g.in_c; ++c) y[r * g.in_c + c] += b[c];
    }
    const bool rec = Tape::recording({&x, &kernel, &bias});
    Var out = make_output(std::move(y), "conv_transpose2d", rec);
    if (rec) {
        Tape::active()->record([g, xn = x.node(), kn = kernel.node(), bn = bias.node(), on = out.node()] {
            if (on->grad.empty()) return;
            const real* gy = on->grad.ptr();
            if (xn->requires_grad) {
                Tensor dx(xn->value.shape());
                kernels::conv2d_forward(g, gy, kn->value.ptr(), nullptr, dx.ptr());
                xn->accumulate_grad(dx);
            }
            if (kn->requires_grad) {
                Tensor dk(kn->value.shape());
                kernels::conv2d_backward_kernel(g, gy, xn->value.ptr(), dk.ptr());
                kn->accumulate_grad(dk);
            }
            if (bn && bn->requires_grad) {
                Tensor db(bn->value.shape());
                const std::int64_t rows = g.batch * g.in_h * g.in_w;
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < g.in_c; ++c) db[c] += gy[r * g.in_c + c];
                bn->accumulate_grad(db);
            }
        });
    }
    return out;
}

// -------------------------------------------------------------- normalisation

Var batch_norm(const Var& x, const Var& scale, const Var& shift, BatchNormStats& stats, Mode mode) {
    const Tensor& xv = x.value();
    const std::int64_t c = xv.dim(-1);
    const std::int64_t rows = xv.numel() / c;
    if (scale.value().numel() != c || shift.value().numel() != c)
        throw std::invalid_argument("batch_norm affine parameters do not match channel count");
    const real* gamma = scale.value().ptr();
    const real* beta = shift.value().ptr();

    std::vector<real> mean(static_cast<std::size_t>(c), 0), inv_std(static_cast<std::size_t>(c), 0);
    if (mode == Mode::kTrain) {
        if (rows < 2) throw std::invalid_argument("batch_norm in train mode needs more than one value per channel");
        std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < c; ++j) sum[j] += xv[r * c + j];
        for (std::int64_t j = 0; j < c; ++j) mean[j] = static_cast<real>(sum[j] / rows);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < c; ++j) {
                const double d = xv[r * c + j] - mean[j];
                sq[j] += d * d;
            }
        if (!stats.initialized) {
            stats.running_mean = Tensor(Shape{c});
            stats.running_var = Tensor(Shape{c});
        }
        for (std::int64_t j = 0; j < c; ++j) {
            const double var = sq[j] / rows;
            inv_std[j] = static_cast<real>(1.0 / std::sqrt(var + kNormEpsilon));
            const real unbiased = static_cast<real>(sq[j] / (rows - 1));
            if (stats.initialized) {
                stats.running_mean[j] = stats.momentum * stats.running_mean[j] + (1 - stats.momentum) * mean[j];
                stats.running_var[j] = stats.momentum * stats.running_var[j] + (1 - stats.momentum) * unbiased;
            } else {
                stats.running_mean[j] = mean[j];
                stats.running_var[j] = unbiased;
            }
        }
        stats.initialized = true;
    } else {
        if (!stats.initialized) throw std::logic_error("batch_norm eval mode used before any statistics exist");
        for (std::int64_t j = 0; j < c; ++j) {
            mean[j] = stats.running_mean[j];
            inv_std[j] = real(1) / std::sqrt(stats.running_var[j] + kNormEpsilon);
        }
    }

    const bool rec = Tape::recording({&x, &scale, &shift});
    Tensor xhat(xv.shape());
    Tensor y(xv.shape());
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < c; ++j) {
            const real h = (xv[r * c + j] - mean[j]) * inv_std[j];
            xhat[r * c + j] = h;
            y[r * c + j] = h * gamma[j] + beta[j];
        }
    Var out = make_output(std::move(y), "batch_norm", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), sn = scale.node(), bn = shift.node(), on = out.node(),
                                xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c,
                                train = mode == Mode::kTrain] {
            if (on->grad.empty()) return;
            const Tensor& g = on->grad;
            std::vector<double> sg(static_cast<std::size_t>(c), 0.0), sgh(static_cast<std::size_t>(c), 0.0);
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < c; ++j) {
                    sg[j] += g[r * c + j];
                    sgh[j] += g[r * c + j] * xhat[r * c + j];
                }
            if (sn->requires_grad) {
                Tensor d(sn->value.shape());
                for (std::int64_t j = 0; j < c; ++j) d[j] = static_cast<real>(sgh[j]);
                sn->accumulate_grad(d);
            }
            if (bn->requires_grad) {
                Tensor d(bn->value.shape());
                for (std::int64_t j = 0; j < c; ++j) d[j] = static_cast<real>(sg[j]);
                bn->accumulate_grad(d);
            }
            if (xn->requires_grad) {
                const real* gamma = sn->value.ptr();
                Tensor dx(xn->value.shape());
                const double n = static_cast<double>(rows);
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double gj = g[r * c + j];
                        if (train) {
                            dx[r * c + j] = static_cast<real>(gamma[j] * inv_std[j] *
                                                              (gj - sg[j] / n - xhat[r * c + j] * sgh[j] / n));
                        } else {
                            dx[r * c + j] = static_cast<real>(gj * gamma[j] * inv_std[j]);
                        }
                    }
                xn->accumulate_grad(dx);
            }
        });
    }
    return out;
}

Var layer_norm(const Var& x, const Var& scale, const Var& shift) {
    const Tensor& xv = x.value();
    const std::int64_t c = xv.dim(-1);
    const std::int64_t rows = xv.numel() / c;
    if (scale.value().numel() != c || shift.value().numel() != c)
        throw std::invalid_argument("layer_norm affine parameters do not match channel count");
    Tensor y(xv.shape()), xhat(xv.shape()), inv_std(Shape{rows});
    kernels::layer_norm_forward(rows, c, xv.ptr(), scale.value().ptr(), shift.value().ptr(), kNormEpsilon,
                                y.ptr(), xhat.ptr(), inv_std.ptr());
    const bool rec = Tape::recording({&x, &scale, &shift});
    Var out = make_output(std::move(y), "layer_norm", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), sn = scale.node(), bn = shift.node(), on = out.node(),
                                xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c] {
            if (on->grad.empty()) return;
            Tensor dx(xn->value.shape());
            Tensor dg(Shape{c}), db(Shape{c});
            kernels::layer_norm_backward(rows, c, on->grad.ptr(), xhat.ptr(), inv_std.ptr(), sn->value.ptr(),
                                         dx.ptr(), dg.ptr(), db.ptr());
            if (xn->requires_grad) xn->accumulate_grad(dx);
            if (sn->requires_grad) sn->accumulate_grad(dg.reshaped(sn->value.shape()));
            if (bn->requires_grad) bn->accumulate_grad(db.reshaped(bn->value.shape()));
        });
    }
    return out;
}

Var normalize(const Var& x, NormKind kind, const Var& scale, const Var& shift, BatchNormStats* stats,
              Mode mode) {
    if (kind == NormKind::kLayer) return layer_norm(x, scale, shift);
    if (stats == nullptr) throw std::invalid_argument("batch norm requires running statistics");
    return batch_norm(x, scale, shift, *stats, mode);
}

// ---------------------------------------------------------------- activations

Var activation(const Var& x, Activation kind) {
    const Tensor& xv = x.value();
    Tensor y;
    switch (kind) {
        case Activation::kSwish:
            y = map(xv, [](real z) { return z * sigmoid(z); });
            break;
        case Activation::kGelu:
            y = map(xv, [](real z) { return real(0.5) * z * (real(1) + std::erf(z * std::numbers::sqrt2_v<real> / 2)); });
            break;
        case Activation::kSigmoid:
            y = map(xv, [](real z) { return sigmoid(z); });
            break;
    }
    const bool rec = Tape::recording({&x});
    Var out = make_output(std::move(y), "activation", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node(), kind] {
            if (on->grad.empty()) return;
            const Tensor& xv = xn->value;
            const Tensor& yv = on->value;
            const Tensor& g = on->grad;
            Tensor dx(xv.shape());
            const std::int64_t n = xv.numel();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) {
                const real z = xv[i];
                real d = 0;
                switch (kind) {
                    case Activation::kSwish: {
                        const real s = sigmoid(z);
                        d = s + z * s * (1 - s);
                        break;
                    }
                    case Activation::kGelu: {
                        const real cdf = real(0.5) * (real(1) + std::erf(z * std::numbers::sqrt2_v<real> / 2));
                        const real pdf = std::exp(-z * z / 2) * std::numbers::inv_sqrtpi_v<real> / std::numbers::sqrt2_v<real>;
                        d = cdf + z * pdf;
                        break;
                    }
                    case Activation::kSigmoid:
                        d = yv[i] * (1 - yv[i]);
                        break;
                }
                dx[i] = g[i] * d;
            }
            xn->accumulate_grad(dx);
        });
    }
    return out;
}

Var relu(const Var& x) {
    const bool rec = Tape::recording({&x});
    Var out = make_output(map(x.value(), [](real z) { return z > 0 ? z : real(0); }), "relu", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node()] {
            if (on->grad.empty()) return;
            Tensor dx(xn->value.shape());
            for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] = xn->value[i] > 0 ? on->grad[i] : real(0);
            xn->accumulate_grad(dx);
        });
    }
    return out;
}

// ------------------------------------------------------------------ attention

Var attention_local(const Var& q, const Var& k, const Var& v, int heads) {
    require_same_shape(q, k, "attention_local");
    require_same_shape(q, v, "attention_local");
    const Dims4 d = dims4(q.value(), "attention_local");
    if (heads < 1 || d.c % heads != 0)
        throw std::invalid_argument("attention_local: embedding dim " + std::to_string(d.c) +
                                    " not divisible by heads " + std::to_string(heads));
    Tensor out(q.shape());
    Tensor weights(Shape{d.b, d.h, d.w, heads, 9});
    kernels::attention_forward(d, heads, q.value().ptr(), k.value().ptr(), v.value().ptr(), out.ptr(),
                               weights.ptr());
    const bool rec = Tape::recording({&q, &k, &v});
    Var result = make_output(std::move(out), "attention_local", rec);
    if (rec) {
        Tape::active()->record([d, heads, qn = q.node(), kn = k.node(), vn = v.node(), on = result.node(),
                                weights = std::move(weights)] {
            if (on->grad.empty()) return;
            Tensor dq(qn->value.shape()), dk(kn->value.shape()), dv(vn->value.shape());
            kernels::attention_backward(d, heads, qn->value.ptr(), kn->value.ptr(), vn->value.ptr(),
                                        weights.ptr(), on->grad.ptr(), dq.ptr(), dk.ptr(), dv.ptr());
            if (qn->requires_grad) qn->accumulate_grad(dq);
            if (kn->requires_grad) kn->accumulate_grad(dk);
            if (vn->requires_grad) vn->accumulate_grad(dv);
        });
    }
    return result;
}

// ------------------------------------------------------------------ pointwise

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
    const bool rec = Tape::recording({&a, &b});
    Var out = make_output(std::move(y), "add", rec);
    if (rec) {
        Tape::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->requires_grad) an->accumulate_grad(on->grad);
            if (bn->requires_grad) bn->accumulate_grad(on->grad);
        });
    }
    return out;
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] - b.value()[i];
    const bool rec = Tape::recording({&a, &b});
    Var out = make_output(std::move(y), "sub", rec);
    if (rec) {
        Tape::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->requires_grad) an->accumulate_grad(on->grad);
            if (bn->requires_grad) {
                Tensor g = on->grad;
                for (auto& e : g.data()) e = -e;
                bn->accumulate_grad(g);
            }
        });
    }
    return out;
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "hadamard");
    Tensor y(a.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
    const bool rec = Tape::recording({&a, &b});
    Var out = make_output(std::move(y), "hadamard", rec);
    if (rec) {
        Tape::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            const Tensor& g = on->grad;
            if (an->requires_grad) {
                Tensor d(g.shape());
                for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = g[i] * bn->value[i];
                an->accumulate_grad(d);
            }
            if (bn->requires_grad) {
                Tensor d(g.shape());
                for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = g[i] * an->value[i];
                bn->accumulate_grad(d);
            }
        });
    }
    return out;
}

Var scale(const Var& a, real factor) {
    const bool rec = Tape::recording({&a});
    Var out = make_output(map(a.value(), [factor](real z) { return z * factor; }), "scale", rec);
    if (rec) {
        Tape::active()->record([an = a.node(), on = out.node(), factor] {
            if (on->grad.empty()) return;
            an->accumulate_grad(map(on->grad, [factor](real z) { return z * factor; }));
        });
    }
    return out;
}

Var scale_cells(const Var& x, const Var& s) {
    const Dims4 d = dims4(x.value(), "scale_cells");
    const Shape expect{d.b, d.h, d.w, 1};
    if (s.shape() != expect)
        throw std::invalid_argument("scale_cells: expected per-cell factors " + shape_str(expect) + ", got " +
                                    shape_str(s.shape()));
    Tensor y(x.shape());
    const std::int64_t cells = d.cells();
    for (std::int64_t r = 0; r < cells; ++r)
        for (std::int64_t c = 0; c < d.c; ++c) y[r * d.c + c] = x.value()[r * d.c + c] * s.value()[r];
    const bool rec = Tape::recording({&x, &s});
    Var out = make_output(std::move(y), "scale_cells", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), sn = s.node(), on = out.node(), cells, ch = d.c] {
            if (on->grad.empty()) return;
            const Tensor& g = on->grad;
            if (xn->requires_grad) {
                Tensor dx(g.shape());
                for (std::int64_t r = 0; r < cells; ++r)
                    for (std::int64_t c = 0; c < ch; ++c) dx[r * ch + c] = g[r * ch + c] * sn->value[r];
                xn->accumulate_grad(dx);
            }
            if (sn->requires_grad) {
                Tensor ds(sn->value.shape());
                for (std::int64_t r = 0; r < cells; ++r) {
                    real acc = 0;
                    for (std::int64_t c = 0; c < ch; ++c) acc += g[r * ch + c] * xn->value[r * ch + c];
                    ds[r] = acc;
                }
                sn->accumulate_grad(ds);
            }
        });
    }
    return out;
}

// --------------------------------------------------------------------- losses

Var mse(const Var& a, const Var& b) {
    require_same_shape(a, b, "mse");
    const std::int64_t n = a.value().numel();
    if (n == 0) throw std::invalid_argument("mse of empty tensors");
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = double(a.value()[i]) - b.value()[i];
        acc += d * d;
    }
    const bool rec = Tape::recording({&a, &b});
    Var out = make_output(scalar(static_cast<real>(acc / n)), "mse", rec);
    if (rec) {
        Tape::active()->record([an = a.node(), bn = b.node(), on = out.node(), n] {
            if (on->grad.empty()) return;
            const real k = 2 * on->grad[0] / static_cast<real>(n);
            Tensor d(an->value.shape());
            for (std::int64_t i = 0; i < n; ++i) d[i] = k * (an->value[i] - bn->value[i]);
            if (an->requires_grad) an->accumulate_grad(d);
            if (bn->requires_grad) {
                for (auto& e : d.data()) e = -e;
                bn->accumulate_grad(d);
            }
        });
    }
    return out;
}

Var l1_clip_norm(const Var& x, real lo, real hi) {
    if (lo > hi) throw std::invalid_argument("l1_clip_norm: lo > hi");
    const std::int64_t n = x.value().numel();
    if (n == 0) throw std::invalid_argument("l1_clip_norm of empty tensor");
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const real z = x.value()[i];
        acc += z > hi ? z - hi : (z < lo ? lo - z : real(0));
    }
    const bool rec = Tape::recording({&x});
    Var out = make_output(scalar(static_cast<real>(acc / n)), "l1_clip_norm", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node(), lo, hi, n] {
            if (on->grad.empty()) return;
            const real k = on->grad[0] / static_cast<real>(n);
            Tensor d(xn->value.shape());
            for (std::int64_t i = 0; i < n; ++i) {
                const real z = xn->value[i];
                d[i] = z > hi ? k : (z < lo ? -k : real(0));
            }
            xn->accumulate_grad(d);
        });
    }
    return out;
}

Var mean_all(const Var& x) {
    const std::int64_t n = x.value().numel();
    if (n == 0) throw std::invalid_argument("mean of empty tensor");
    const bool rec = Tape::recording({&x});
    Var out = make_output(scalar(static_cast<real>(x.value().sum() / n)), "mean", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node(), n] {
            if (on->grad.empty()) return;
            xn->accumulate_grad(Tensor(xn->value.shape(), on->grad[0] / static_cast<real>(n)));
        });
    }
    return out;
}

Var weighted_sum(std::span<const Var> terms, std::span<const real> weights) {
    if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum: terms/weights size mismatch");
    real acc = 0;
    bool rec = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].value().numel() != 1) throw std::invalid_argument("weighted_sum expects scalar terms");
        acc += weights[i] * terms[i].value()[0];
        rec = rec || Tape::recording({&terms[i]});
    }
    Var out = make_output(scalar(acc), "weighted_sum", rec);
    if (rec) {
        std::vector<NodePtr> nodes;
        for (const auto& t : terms) nodes.push_back(t.node());
        Tape::active()->record([nodes = std::move(nodes), w = std::vector<real>(weights.begin(), weights.end()),
                                on = out.node()] {
            if (on->grad.empty()) return;
            for (std::size_t i = 0; i < nodes.size(); ++i)
                if (nodes[i]->requires_grad) nodes[i]->accumulate_grad(scalar(w[i] * on->grad[0]));
        });
    }
    return out;
}

// ------------------------------------------------------------- layout changes

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    const Dims4 d0 = dims4(parts[0].value(), "concat");
    std::vector<std::int64_t> widths;
    std::int64_t total = 0;
    bool rec = false;
    for (const auto& p : parts) {
        const Dims4 d = dims4(p.value(), "concat");
        if (d.b != d0.b || d.h != d0.h || d.w != d0.w)
            throw std::invalid_argument("concat: spatial/batch shape mismatch");
        widths.push_back(d.c);
        total += d.c;
        rec = rec || Tape::recording({&p});
    }
    Tensor y(Shape{d0.b, d0.h, d0.w, total});
    const std::int64_t cells = d0.cells();
    std::int64_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& src = parts[i].value();
        for (std::int64_t r = 0; r < cells; ++r)
            std::copy_n(src.ptr() + r * widths[i], widths[i], y.ptr() + r * total + off);
        off += widths[i];
    }
    Var out = make_output(std::move(y), "concat", rec);
    if (rec) {
        std::vector<NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        Tape::active()->record([nodes = std::move(nodes), widths = std::move(widths), on = out.node(), cells, total] {
            if (on->grad.empty()) return;
            std::int64_t off = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (nodes[i]->requires_grad) {
                    Tensor d(nodes[i]->value.shape());
                    for (std::int64_t r = 0; r < cells; ++r)
                        std::copy_n(on->grad.ptr() + r * total + off, widths[i], d.ptr() + r * widths[i]);
                    nodes[i]->accumulate_grad(d);
                }
                off += widths[i];
            }
        });
    }
    return out;
}

Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count) {
    const Dims4 d = dims4(x.value(), "slice_channels");
    if (begin < 0 || count < 1 || begin + count > d.c)
        throw std::invalid_argument("slice_channels: range out of bounds");
    Tensor y(Shape{d.b, d.h, d.w, count});
    const std::int64_t cells = d.cells();
    for (std::int64_t r = 0; r < cells; ++r) std::copy_n(x.value().ptr() + r * d.c + begin, count, y.ptr() + r * count);
    const bool rec = Tape::recording({&x});
    Var out = make_output(std::move(y), "slice_channels", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node(), cells, ch = d.c, begin, count] {
            if (on->grad.empty()) return;
            Tensor dx(xn->value.shape());
            for (std::int64_t r = 0; r < cells; ++r)
                std::copy_n(on->grad.ptr() + r * count, count, dx.ptr() + r * ch + begin);
            xn->accumulate_grad(dx);
        });
    }
    return out;
}

std::pair<Var, Var> split_channels(const Var& x) {
    const Dims4 d = dims4(x.value(), "split");
    if (d.c % 2 != 0) throw std::invalid_argument("split on odd channel count " + std::to_string(d.c));
    return {slice_channels(x, 0, d.c / 2), slice_channels(x, d.c / 2, d.c / 2)};
}

Var concat_batch(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_batch of nothing");
    Shape s = parts[0].shape();
    std::int64_t total = 0;
    bool rec = false;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        if (ps.size() != s.size() || !std::equal(ps.begin() + 1, ps.end(), s.begin() + 1))
            throw std::invalid_argument("concat_batch: trailing shape mismatch");
        total += ps[0];
        rec = rec || Tape::recording({&p});
    }
    s[0] = total;
    Tensor y(s);
    std::int64_t off = 0;
    for (const auto& p : parts) {
        std::copy_n(p.value().ptr(), p.value().numel(), y.ptr() + off);
        off += p.value().numel();
    }
    Var out = make_output(std::move(y), "concat_batch", rec);
    if (rec) {
        std::vector<NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        Tape::active()->record([nodes = std::move(nodes), on = out.node()] {
            if (on->grad.empty()) return;
            std::int64_t off = 0;
            for (const auto& n : nodes) {
                if (n->requires_grad) {
                    Tensor d(n->value.shape());
                    std::copy_n(on->grad.ptr() + off, d.numel(), d.ptr());
                    n->accumulate_grad(d);
                }
                off += n->value.numel();
            }
        });
    }
    return out;
}

Var slice_batch(const Var& x, std::int64_t begin, std::int64_t count) {
    Shape s = x.shape();
    if (s.empty() || begin < 0 || count < 1 || begin + count > s[0])
        throw std::invalid_argument("slice_batch: range out of bounds");
    const std::int64_t per = x.value().numel() / s[0];
    s[0] = count;
    Tensor y(s);
    std::copy_n(x.value().ptr() + begin * per, count * per, y.ptr());
    const bool rec = Tape::recording({&x});
    Var out = make_output(std::move(y), "slice_batch", rec);
    if (rec) {
        Tape::active()->record([xn = x.node(), on = out.node(), off = begin * per] {
            if (on->grad.empty()) return;
            Tensor dx(xn->value.shape());
            std::copy_n(on->grad.ptr(), on->grad.numel(), dx.ptr() + off);
            xn->accumulate_grad(dx);
        });
    }
    return out;
}

Var dropout(const Var& x, real keep_probability, Mode mode, std::uint64_t seed) {
    if (!(keep_probability > 0 && keep_probability <= 1))
        throw std::invalid_argument("dropout keep probability must be in (0, 1]");
    if (mode == Mode::kEval || keep_probability == 1) return x;
    Rng rng(seed);
    Tensor mask(x.shape());
    for (auto& m : mask.data()) m = rng.bernoulli(keep_probability) ? real(1) / keep_probability : real(0);
    return mul(x, Var(std::move(mask)));
}

Var simple_gate(const Var& x) {
    auto [a, b] = split_channels(x);
    return mul(a, b);
}

}  // namespace lnca
