#include "lnca/autodiff.hpp"

#include <stdexcept>

namespace lnca::inline LNCA_PRECISION {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Node::accumulate_grad(const Tensor& g) {
    if (g.shape() != value.shape())
        throw std::logic_error("gradient shape " + shape_str(g.shape()) + " does not match value " +
                               shape_str(value.shape()));
    if (grad.empty()) {
        grad = g;
        return;
    }
    real* dst = grad.ptr();
    const real* src = g.ptr();
    const std::int64_t n = g.numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tape::Tape() : previous_(g_active_tape) {
    g_active_tape = this;
    MemoryTracker::reset_peak();
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::recording(std::initializer_list<const Var*> inputs) {
    if (g_active_tape == nullptr) return false;
    for (const Var* v : inputs) {
        if (v != nullptr && v->requires_grad()) return true;
    }
    return false;
}

void Tape::record(BackwardFn backward) { entries_.push_back(std::move(backward)); }

void Tape::backward(const Var& loss) {
    if (loss.value().numel() != 1) throw std::invalid_argument("backward expects a scalar loss");
    if (!loss.requires_grad()) throw std::logic_error("loss does not depend on any trainable value");
    loss.node()->accumulate_grad(Tensor(loss.shape(), real(1)));
    while (!entries_.empty()) {
        BackwardFn fn = std::move(entries_.back());
        entries_.pop_back();
        fn();
    }
}

NoGradGuard::NoGradGuard() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

}  // namespace lnca
