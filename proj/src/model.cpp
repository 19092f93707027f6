#include "lnca/model.hpp"

#include <stdexcept>
#include <string>

namespace lnca::inline LNCA_PRECISION {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::kLatentViTCA: return "latent-vitca";
        case ModelKind::kLatentNAFCA: return "latent-nafca";
        case ModelKind::kInputViTCA: return "vitca-input-space";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "latent-vitca") return ModelKind::kLatentViTCA;
    if (name == "latent-nafca") return ModelKind::kLatentNAFCA;
    if (name == "vitca-input-space") return ModelKind::kInputViTCA;
    throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

ModelConfig resolved(ModelConfig config) {
    config.transition.kind = config.kind == ModelKind::kLatentNAFCA ? TransitionKind::kNAFCA : TransitionKind::kViTCA;
    config.transition.visible_channels =
        config.kind == ModelKind::kInputViTCA ? config.ae.channels : config.ae.latent_channels;
    return config;
}

RestorationModel::RestorationModel(const ModelConfig& config) : config_(resolved(config)) {
    config_.ae.validate();
    if (latent()) ae_ = std::make_unique<Autoencoder>(config_.ae);
    transition_ = make_transition(config_.transition);
}

RestorationModel::Seeded RestorationModel::seed(const Var& corrupted) const {
    Seeded s;
    if (!latent()) {
        s.state = seed_state(corrupted.detach(), config_.transition.hidden_channels);
        return s;
    }
    NoGradGuard guard;
    const EncodeOutput e = ae_->encode(corrupted);
    s.state = seed_state(e.latent.detach(), config_.transition.hidden_channels);
    s.context = e.skip.detach();
    return s;
}

Var RestorationModel::readout(const CAState& state, const Var& context) const {
    const Var visible = state.visible();
    return latent() ? ae_->decode(visible, context) : visible;
}

Var RestorationModel::target_latent(const Var& clean) const {
    if (!latent()) return clean.detach();
    NoGradGuard guard;
    return ae_->encode(clean).latent.detach();
}

Var RestorationModel::restore(const Var& corrupted, int steps, std::uint64_t seed_value) const {
    const Seeded s = seed(corrupted);
    return readout(transition_->rollout(s.state, steps, seed_value), s.context);
}

}  // namespace lnca
