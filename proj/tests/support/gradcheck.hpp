#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lnca/autodiff.hpp"
#include "lnca/ops.hpp"
#include "lnca/rng.hpp"

namespace lnca::inline LNCA_PRECISION::testing {

struct GradCheckResult {
    double max_rel_error = 0;
    double max_abs_error = 0;
    std::int64_t checked = 0;
};

/// Relative error with a 1e-3 floor on the denominator so that gradients that
/// are zero up to rounding do not dominate.
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Central finite differences of `loss` with respect to every element of
/// every leaf (or a seeded sample of at most `max_elements` per leaf).
inline GradCheckResult grad_check(const std::function<Var()>& loss, std::vector<Var> leaves, double h = 1e-5,
                                  std::int64_t max_elements = 256, std::uint64_t seed = 7) {
    for (auto& l : leaves) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    {
        Tape tape;
        Var value = loss();
        tape.backward(value);
    }
    GradCheckResult res;
    Rng rng(seed);
    for (auto& l : leaves) {
        const Tensor analytic = l.has_grad() ? l.grad() : Tensor::zeros_like(l.value());
        const std::int64_t n = l.value().numel();
        std::vector<std::int64_t> idx;
        if (n <= max_elements) {
            for (std::int64_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (std::int64_t i = 0; i < max_elements; ++i) idx.push_back(static_cast<std::int64_t>(rng.below(n)));
        }
        for (std::int64_t i : idx) {
            real& slot = l.mutable_value()[i];
            const real orig = slot;
            slot = static_cast<real>(orig + h);
            const double fp = loss().value()[0];
            slot = static_cast<real>(orig - h);
            const double fm = loss().value()[0];
            slot = orig;
            const double numeric = (fp - fm) / (2 * h);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric));
            res.max_abs_error = std::max(res.max_abs_error, std::abs(analytic[i] - numeric));
            ++res.checked;
        }
    }
    return res;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

/// Scalar sum(y * r) with a fixed random r: exercises every output element.
inline Var project(const Var& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor r = random_tensor(y.shape(), rng);
    return scale(mean_all(mul(y, Var(std::move(r)))), static_cast<real>(y.value().numel()));
}

}  // namespace lnca::testing
