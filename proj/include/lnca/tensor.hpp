#pragma once

#include "lnca/precision.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lnca::inline LNCA_PRECISION {

#ifdef LNCA_REAL_DOUBLE
using real = double;
inline constexpr const char* kRealName = "f64";
#else
using real = float;
inline constexpr const char* kRealName = "f32";
#endif

/// Raised when tracked tensor storage would exceed the active byte budget.
class ByteBudgetExceeded : public std::runtime_error {
   public:
    ByteBudgetExceeded(std::int64_t requested, std::int64_t budget);
    std::int64_t requested() const { return requested_; }
    std::int64_t budget() const { return budget_; }

   private:
    std::int64_t requested_;
    std::int64_t budget_;
};

/// Process-wide accounting of live tensor storage. Every Tensor buffer goes
/// through TrackedAllocator, so live()/peak() see exactly the bytes held by
/// tensor values, gradients, saved activations and optimizer state.
class MemoryTracker {
   public:
    static std::int64_t live() { return live_.load(std::memory_order_relaxed); }
    static std::int64_t peak() { return peak_.load(std::memory_order_relaxed); }
    /// Restarts peak tracking from the current live byte count.
    static void reset_peak() { peak_.store(live(), std::memory_order_relaxed); }

    static void acquire(std::size_t bytes);
    static void release(std::size_t bytes);

    /// 0 disables the budget.
    static void set_budget(std::int64_t bytes) { budget_.store(bytes, std::memory_order_relaxed); }
    static std::int64_t budget() { return budget_.load(std::memory_order_relaxed); }

   private:
    static std::atomic<std::int64_t> live_;
    static std::atomic<std::int64_t> peak_;
    static std::atomic<std::int64_t> budget_;
};

/// RAII budget scope; restores the previous budget on exit.
class ScopedByteBudget {
   public:
    explicit ScopedByteBudget(std::int64_t bytes) : previous_(MemoryTracker::budget()) {
        MemoryTracker::set_budget(bytes);
    }
    ~ScopedByteBudget() { MemoryTracker::set_budget(previous_); }
    ScopedByteBudget(const ScopedByteBudget&) = delete;
    ScopedByteBudget& operator=(const ScopedByteBudget&) = delete;

   private:
    std::int64_t previous_;
};

template <typename T>
struct TrackedAllocator {
    using value_type = T;

    TrackedAllocator() noexcept = default;
    template <typename U>
    TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        MemoryTracker::acquire(n * sizeof(T));
        try {
            return std::allocator<T>{}.allocate(n);
        } catch (...) {
            MemoryTracker::release(n * sizeof(T));
            throw;
        }
    }
    void deallocate(T* p, std::size_t n) noexcept {
        std::allocator<T>{}.deallocate(p, n);
        MemoryTracker::release(n * sizeof(T));
    }

    template <typename U>
    bool operator==(const TrackedAllocator<U>&) const noexcept {
        return true;
    }
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of `real` with value semantics.
/// Rank-4 tensors use the BHWC layout throughout the project.
class Tensor {
   public:
    using Buffer = std::vector<real, TrackedAllocator<real>>;

    Tensor() = default;
    explicit Tensor(Shape shape, real fill = real(0));
    Tensor(Shape shape, std::span<const real> values);
    Tensor(Shape shape, std::initializer_list<real> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
    static Tensor full(Shape shape, real v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int axis) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::size_t bytes() const { return data_.size() * sizeof(real); }
    bool empty() const { return data_.empty(); }

    std::span<real> data() { return {data_.data(), data_.size()}; }
    std::span<const real> data() const { return {data_.data(), data_.size()}; }
    real* ptr() { return data_.data(); }
    const real* ptr() const { return data_.data(); }

    real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    /// BHWC element access (rank 4 only).
    real& at(std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c);
    real at(std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c) const;

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(real v);
    /// Throws std::domain_error naming `op` when any element is NaN or Inf.
    void check_finite(const char* op) const;

    double sum() const;

   private:
    Shape shape_;
    Buffer data_;
};

/// Shape helpers for BHWC tensors.
struct Dims4 {
    std::int64_t b, h, w, c;
    std::int64_t cells() const { return b * h * w; }
};
Dims4 dims4(const Tensor& t, const char* what);

}  // namespace lnca
