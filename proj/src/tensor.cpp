#include "lnca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lnca::inline LNCA_PRECISION {

std::atomic<std::int64_t> MemoryTracker::live_{0};
std::atomic<std::int64_t> MemoryTracker::peak_{0};
std::atomic<std::int64_t> MemoryTracker::budget_{0};

ByteBudgetExceeded::ByteBudgetExceeded(std::int64_t requested, std::int64_t budget)
    : std::runtime_error("byte budget exceeded: " + std::to_string(requested) + " > " +
                         std::to_string(budget)),
      requested_(requested),
      budget_(budget) {}

void MemoryTracker::acquire(std::size_t bytes) {
    const auto n = static_cast<std::int64_t>(bytes);
    const std::int64_t now = live_.fetch_add(n, std::memory_order_relaxed) + n;
    const std::int64_t cap = budget_.load(std::memory_order_relaxed);
    if (cap > 0 && now > cap) {
        live_.fetch_sub(n, std::memory_order_relaxed);
        throw ByteBudgetExceeded(now, cap);
    }
    std::int64_t prev = peak_.load(std::memory_order_relaxed);
    while (now > prev && !peak_.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
    }
}

void MemoryTracker::release(std::size_t bytes) {
    live_.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, real fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::span<const real> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(values.size()))
        throw std::invalid_argument("value count does not match shape " + shape_str(shape_));
    data_.assign(values.begin(), values.end());
}

Tensor::Tensor(Shape shape, std::initializer_list<real> values)
    : Tensor(std::move(shape), std::span<const real>(values.begin(), values.size())) {}

std::int64_t Tensor::dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw std::out_of_range("axis out of range");
    return shape_[static_cast<std::size_t>(axis)];
}

real& Tensor::at(std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c) {
    return data_[static_cast<std::size_t>(((b * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
}

real Tensor::at(std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return data_[static_cast<std::size_t>(((b * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::check_finite(const char* op) const {
    for (real v : data_) {
        if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite value produced by ") + op);
    }
}

double Tensor::sum() const {
    double s = 0;
    for (real v : data_) s += v;
    return s;
}

Dims4 dims4(const Tensor& t, const char* what) {
    if (t.rank() != 4)
        throw std::invalid_argument(std::string(what) + ": expected BHWC tensor, got " + shape_str(t.shape()));
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

}  // namespace lnca
