#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include "lnca/nn.hpp"

namespace lnca::inline LNCA_PRECISION {

enum class TransitionKind { kViTCA, kNAFCA };

std::string_view to_string(TransitionKind kind);
TransitionKind parse_transition_kind(std::string_view name);

struct TransitionConfig {
    TransitionKind kind = TransitionKind::kNAFCA;
    std::int64_t visible_channels = 16;
    std::int64_t hidden_channels = 32;
    // ViTCA
    std::int64_t embed_dim = 64;
    int heads = 4;
    std::int64_t mlp_hidden = 128;
    bool positional_encoding = false;
    // NAFCA; 0 selects twice the state channel count.
    std::int64_t perception_width = 0;
    std::int64_t update_width = 0;
    double dropout_keep = 0.9;

    double update_probability = 0.5;
    /// Start from the identity update (head weights zero).
    bool zero_init_head = true;
    std::uint64_t init_seed = 2;

    std::int64_t state_channels() const { return visible_channels + hidden_channels; }
    void validate() const;
};

/// Cell states of a batch: visible channels first, then hidden channels.
struct CAState {
    Var cells;
    std::int64_t visible_channels = 0;
    std::int64_t step = 0;

    Var visible() const { return slice_channels(cells, 0, visible_channels); }
    Var hidden() const { return slice_channels(cells, visible_channels, cells.dim(3) - visible_channels); }
};

/// visible = latent, hidden = 0, step = 0.
CAState seed_state(const Var& latent, std::int64_t hidden_channels);

/// Asynchronous update mask [B,H,W,1] with P(1) = p, a pure function of seed.
Tensor update_mask(const Shape& cells_shape, double p, std::uint64_t seed);

class Transition : public Module {
   public:
    explicit Transition(const TransitionConfig& config);

    const TransitionConfig& config() const { return config_; }

    /// Update vector for every cell; `seed` drives dropout.
    virtual Var delta(const Var& cells, std::uint64_t seed) const = 0;

    /// One step: cells += mask * delta with mask drawn from
    /// derive_seed(seed, {state.step}). The mask also applies in eval mode.
    CAState step(const CAState& state, std::uint64_t seed) const;
    CAState step(const CAState& state, const Tensor& mask, std::uint64_t seed) const;
    /// `steps` applications of step(); seeds chain through the step counter so
    /// rollout(s, a + b) == rollout(rollout(s, a), b).
    CAState rollout(const CAState& state, int steps, std::uint64_t seed) const;

   protected:
    TransitionConfig config_;
};

/// Localized vision-transformer transition: embed, pre-LN local MHSA over the
/// Moore neighbourhood, pre-LN GELU MLP, LN head.
class ViTCATransition : public Transition {
   public:
    explicit ViTCATransition(const TransitionConfig& config);
    Var delta(const Var& cells, std::uint64_t seed) const override;

   private:
    ConvLayer embed_, qkv_, proj_, mlp1_, mlp2_, head_;
    NormLayer ln_attn_, ln_mlp_, ln_head_;
};

/// NAF-style transition: perception block with SimpleGate and the single-filter
/// 3x3 gate x * C(x), update block with SimpleGate, LN head.
class NAFCATransition : public Transition {
   public:
    explicit NAFCATransition(const TransitionConfig& config);
    Var delta(const Var& cells, std::uint64_t seed) const override;

   private:
    NormLayer ln_perc_, ln_upd_, ln_head_;
    ConvLayer perc_in_, gate_, perc_out_, upd_in_, upd_out_, head_;
};

std::unique_ptr<Transition> make_transition(const TransitionConfig& config);

/// Sinusoidal position channels [1,H,W,8] (two frequencies per axis).
Tensor positional_encoding(std::int64_t height, std::int64_t width);
inline constexpr std::int64_t kPositionalChannels = 8;

}  // namespace lnca
