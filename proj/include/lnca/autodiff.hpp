#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lnca/tensor.hpp"

namespace lnca::inline LNCA_PRECISION {

struct Node {
    Tensor value;
    Tensor grad;  // empty until a gradient reaches this node
    bool requires_grad = false;

    void accumulate_grad(const Tensor& g);
};

/// Handle to a node of the differentiable computation. Copies share the node;
/// the tensor it wraps is a plain value.
class Var {
   public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    const Shape& shape() const { return node_->value.shape(); }
    std::int64_t dim(int axis) const { return node_->value.dim(axis); }

    /// Fresh leaf holding a copy of the value, cut from any recorded history.
    Var detach() const { return Var(node_->value, false); }

    const std::shared_ptr<Node>& node() const { return node_; }

   private:
    std::shared_ptr<Node> node_;
};

/// Ordered record of executed differentiable ops for one forward pass.
/// Constructing a Tape makes it the active tape of the calling thread; ops
/// executed while no tape is active (or whose inputs need no gradient) are
/// not recorded, which is how inference avoids keeping activations alive.
class Tape {
   public:
    using BackwardFn = std::function<void()>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    /// True when an op with these inputs must be recorded.
    static bool recording(std::initializer_list<const Var*> inputs);

    void record(BackwardFn backward);

    /// Seeds d(loss)/d(loss) = 1 and replays records in exact reverse order.
    /// Records are released as they are consumed.
    void backward(const Var& loss);

    std::size_t size() const { return entries_.size(); }
    /// Highest live tensor byte count observed since this tape was created.
    std::int64_t peak_bytes() const { return MemoryTracker::peak(); }
    void clear() { entries_.clear(); }

   private:
    std::vector<BackwardFn> entries_;
    Tape* previous_;
};

/// Suspends recording for the current thread (e.g. frozen sub-networks whose
/// activations need no gradients).
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    Tape* previous_;
};

}  // namespace lnca
