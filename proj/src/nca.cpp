#include "lnca/nca.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lnca::inline LNCA_PRECISION {

std::string_view to_string(TransitionKind kind) { return kind == TransitionKind::kViTCA ? "vitca" : "nafca"; }

TransitionKind parse_transition_kind(std::string_view name) {
    if (name == "vitca") return TransitionKind::kViTCA;
    if (name == "nafca") return TransitionKind::kNAFCA;
    throw std::invalid_argument("unknown transition kind '" + std::string(name) + "'");
}

void TransitionConfig::validate() const {
    if (visible_channels < 1 || hidden_channels < 0) throw std::invalid_argument("transition channel counts invalid");
    if (!(update_probability > 0 && update_probability <= 1))
        throw std::invalid_argument("update_probability must lie in (0, 1]");
    if (!(dropout_keep > 0 && dropout_keep <= 1)) throw std::invalid_argument("dropout_keep must lie in (0, 1]");
    if (kind == TransitionKind::kViTCA) {
        if (heads < 1 || embed_dim < 1 || embed_dim % heads != 0)
            throw std::invalid_argument("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                                        std::to_string(heads));
        if (mlp_hidden < 1) throw std::invalid_argument("mlp_hidden must be positive");
    } else {
        if (perception_width < 0 || perception_width % 2 || update_width < 0 || update_width % 2)
            throw std::invalid_argument("NAFCA widths must be even (SimpleGate halves them)");
    }
}

CAState seed_state(const Var& latent, std::int64_t hidden_channels) {
    const Dims4 d = dims4(latent.value(), "seed_state");
    CAState s;
    s.visible_channels = d.c;
    if (hidden_channels == 0) {
        s.cells = latent;
        return s;
    }
    const Var hidden(Tensor(Shape{d.b, d.h, d.w, hidden_channels}));
    const Var parts[] = {latent, hidden};
    s.cells = concat_channels(parts);
    return s;
}

Tensor update_mask(const Shape& cells_shape, double p, std::uint64_t seed) {
    Tensor m(Shape{cells_shape[0], cells_shape[1], cells_shape[2], 1});
    if (p >= 1) {
        m.fill(real(1));
        return m;
    }
    Rng rng(seed);
    for (real& v : m.data()) v = rng.bernoulli(p) ? real(1) : real(0);
    return m;
}

Transition::Transition(const TransitionConfig& config) : config_(config) { config_.validate(); }

CAState Transition::step(const CAState& state, std::uint64_t seed) const {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(state.step)});
    return step(state, update_mask(state.cells.shape(), config_.update_probability, derive_seed(s, {1})), s);
}

CAState Transition::step(const CAState& state, const Tensor& mask, std::uint64_t seed) const {
    if (state.cells.dim(3) != config_.state_channels())
        throw std::invalid_argument("transition expects " + std::to_string(config_.state_channels()) +
                                    " state channels, got " + std::to_string(state.cells.dim(3)));
    CAState next = state;
    next.cells = add(state.cells, scale_cells(delta(state.cells, derive_seed(seed, {2})), Var(mask)));
    next.step = state.step + 1;
    return next;
}

CAState Transition::rollout(const CAState& state, int steps, std::uint64_t seed) const {
    if (steps < 1) throw std::invalid_argument("rollout needs at least one step, got " + std::to_string(steps));
    CAState s = state;
    for (int i = 0; i < steps; ++i) s = step(s, seed);
    return s;
}

Tensor positional_encoding(std::int64_t height, std::int64_t width) {
    Tensor pe(Shape{1, height, width, kPositionalChannels});
    for (std::int64_t y = 0; y < height; ++y)
        for (std::int64_t x = 0; x < width; ++x) {
            const double u = (x + 0.5) / width, v = (y + 0.5) / height;
            real* p = pe.ptr() + (y * width + x) * kPositionalChannels;
            for (int f = 0; f < 2; ++f) {
                const double w = std::numbers::pi * (1 << f);
                p[4 * f + 0] = static_cast<real>(std::sin(w * u));
                p[4 * f + 1] = static_cast<real>(std::cos(w * u));
                p[4 * f + 2] = static_cast<real>(std::sin(w * v));
                p[4 * f + 3] = static_cast<real>(std::cos(w * v));
            }
        }
    return pe;
}

namespace {

Init head_init(const TransitionConfig& c) { return c.zero_init_head ? Init::kZero : Init::kXavier; }

Var with_positions(const Var& cells) {
    const Dims4 d = dims4(cells.value(), "positional encoding");
    const Tensor one = positional_encoding(d.h, d.w);
    Tensor pe(Shape{d.b, d.h, d.w, kPositionalChannels});
    for (std::int64_t b = 0; b < d.b; ++b) std::copy_n(one.ptr(), one.numel(), pe.ptr() + b * one.numel());
    const Var parts[] = {cells, Var(std::move(pe))};
    return concat_channels(parts);
}

}  // namespace

ViTCATransition::ViTCATransition(const TransitionConfig& config) : Transition(config) {
    if (config_.kind != TransitionKind::kViTCA) throw std::invalid_argument("ViTCATransition needs kind vitca");
    LayerFactory f(config_.init_seed);
    const std::int64_t C = config_.state_channels(), E = config_.embed_dim;
    const std::int64_t in = C + (config_.positional_encoding ? kPositionalChannels : 0);
    embed_ = f.conv(*this, "vitca.embed", 1, in, E, 1, true, Init::kXavier);
    ln_attn_ = f.norm(*this, "vitca.ln_attn", NormKind::kLayer, E);
    qkv_ = f.conv(*this, "vitca.qkv", 1, E, 3 * E, 1, true, Init::kXavier);
    proj_ = f.conv(*this, "vitca.proj", 1, E, E, 1, true, Init::kXavier);
    ln_mlp_ = f.norm(*this, "vitca.ln_mlp", NormKind::kLayer, E);
    mlp1_ = f.conv(*this, "vitca.mlp1", 1, E, config_.mlp_hidden, 1, true, Init::kHe);
    mlp2_ = f.conv(*this, "vitca.mlp2", 1, config_.mlp_hidden, E, 1, true, Init::kXavier);
    ln_head_ = f.norm(*this, "vitca.ln_head", NormKind::kLayer, E);
    head_ = f.conv(*this, "vitca.head", 1, E, C, 1, true, head_init(config_));
}

Var ViTCATransition::delta(const Var& cells, std::uint64_t) const {
    const std::int64_t E = config_.embed_dim;
    Var h = embed_(config_.positional_encoding ? with_positions(cells) : cells);
    const Var qkv = qkv_(ln_attn_(h, mode()));
    const Var att = attention_local(slice_channels(qkv, 0, E), slice_channels(qkv, E, E), slice_channels(qkv, 2 * E, E),
                                    config_.heads);
    h = add(h, proj_(att));
    h = add(h, mlp2_(activation(mlp1_(ln_mlp_(h, mode())), Activation::kGelu)));
    return head_(ln_head_(h, mode()));
}

NAFCATransition::NAFCATransition(const TransitionConfig& config) : Transition(config) {
    if (config_.kind != TransitionKind::kNAFCA) throw std::invalid_argument("NAFCATransition needs kind nafca");
    LayerFactory f(config_.init_seed);
    const std::int64_t C = config_.state_channels();
    const std::int64_t P = config_.perception_width ? config_.perception_width : 2 * C;
    const std::int64_t U = config_.update_width ? config_.update_width : 2 * C;
    ln_perc_ = f.norm(*this, "nafca.ln_perc", NormKind::kLayer, C);
    perc_in_ = f.conv(*this, "nafca.perc_in", 1, C, P, 1, true, Init::kXavier);
    gate_ = f.conv(*this, "nafca.gate", 3, P / 2, 1, 1, true, Init::kXavier);
    perc_out_ = f.conv(*this, "nafca.perc_out", 1, P / 2, C, 1, true, Init::kXavier);
    ln_upd_ = f.norm(*this, "nafca.ln_upd", NormKind::kLayer, C);
    upd_in_ = f.conv(*this, "nafca.upd_in", 1, C, U, 1, true, Init::kXavier);
    upd_out_ = f.conv(*this, "nafca.upd_out", 1, U / 2, C, 1, true, Init::kXavier);
    ln_head_ = f.norm(*this, "nafca.ln_head", NormKind::kLayer, C);
    head_ = f.conv(*this, "nafca.head", 1, C, C, 1, true, head_init(config_));
}

Var NAFCATransition::delta(const Var& cells, std::uint64_t seed) const {
    const real keep = static_cast<real>(config_.dropout_keep);
    // Perception: the only spatial operator is the single-filter 3x3 gate.
    Var g = simple_gate(perc_in_(ln_perc_(cells, mode())));
    g = scale_cells(g, gate_(g));
    Var h = add(cells, dropout(perc_out_(g), keep, mode(), derive_seed(seed, {1})));
    const Var u = simple_gate(upd_in_(ln_upd_(h, mode())));
    h = add(h, dropout(upd_out_(u), keep, mode(), derive_seed(seed, {2})));
    return head_(ln_head_(h, mode()));
}

std::unique_ptr<Transition> make_transition(const TransitionConfig& config) {
    if (config.kind == TransitionKind::kViTCA) return std::make_unique<ViTCATransition>(config);
    return std::make_unique<NAFCATransition>(config);
}

}  // namespace lnca
