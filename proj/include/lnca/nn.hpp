#pragma once

// Parameter ownership and the small layer building blocks shared by the
// autoencoder and the NCA transition functions.

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "lnca/ops.hpp"
#include "lnca/rng.hpp"

namespace lnca::inline LNCA_PRECISION {

struct NamedParam {
    std::string name;
    Var var;
};

struct NamedStats {
    std::string name;
    BatchNormStats* stats;
};

/// Owns named trainable parameters and batch-norm statistics. Parameters are
/// registered once at construction and keep their order, which is also the
/// checkpoint order.
class Module {
   public:
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;
    virtual ~Module() = default;

    const std::vector<NamedParam>& parameters() const { return params_; }
    std::vector<NamedStats> norm_stats();
    std::int64_t parameter_count() const;

    Mode mode() const { return mode_; }
    void set_mode(Mode mode) { mode_ = mode; }
    /// Frozen modules record no parameter gradients.
    void set_trainable(bool on);
    void zero_grad();

    /// FNV-1a over all parameter bytes and norm statistics, in order.
    std::uint64_t checksum() const;

    Var add_param(const std::string& name, Tensor init);
    BatchNormStats& add_stats(const std::string& name);

   private:
    std::vector<NamedParam> params_;
    std::deque<std::pair<std::string, BatchNormStats>> stats_;
    Mode mode_ = Mode::kTrain;
};

/// Weight initialisation rule for a convolution.
enum class Init { kHe, kXavier, kZero };

struct ConvLayer {
    Var kernel;
    Var bias;  // undefined when the layer has no bias
    int stride = 1;
    bool transposed = false;

    Var operator()(const Var& x) const;
};

struct NormLayer {
    NormKind kind = NormKind::kLayer;
    Var scale;
    Var shift;
    BatchNormStats* stats = nullptr;

    Var operator()(const Var& x, Mode mode) const;
};

/// Registers kernel (and bias) as "<name>.kernel" / "<name>.bias".
class LayerFactory {
   public:
    explicit LayerFactory(std::uint64_t seed) : rng_(seed) {}

    ConvLayer conv(Module& owner, const std::string& name, int k, std::int64_t cin, std::int64_t cout, int stride,
                   bool bias, Init init = Init::kHe, bool transposed = false);
    NormLayer norm(Module& owner, const std::string& name, NormKind kind, std::int64_t channels);

   private:
    Rng rng_;
};

}  // namespace lnca
