#pragma once

#include <memory>
#include <string_view>

#include "lnca/autoencoder.hpp"
#include "lnca/nca.hpp"

namespace lnca::inline LNCA_PRECISION {

enum class ModelKind { kLatentViTCA, kLatentNAFCA, kInputViTCA };

/// "latent-vitca", "latent-nafca", "vitca-input-space".
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
    ModelKind kind = ModelKind::kLatentNAFCA;
    AEConfig ae;
    /// kind and visible_channels are derived from `kind` and `ae`.
    TransitionConfig transition;
};

/// Fills the transition kind and visible channel count implied by `kind`.
ModelConfig resolved(ModelConfig config);

/// Corrupted image -> seeded CA state -> rollout -> restored image. Latent
/// kinds run the NCA between the encoder and decoder of an autoencoder; the
/// input-space kind runs it directly on image cells with no autoencoder.
class RestorationModel {
   public:
    explicit RestorationModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ModelKind kind() const { return config_.kind; }
    bool latent() const { return config_.kind != ModelKind::kInputViTCA; }

    Autoencoder* autoencoder() { return ae_.get(); }
    const Autoencoder* autoencoder() const { return ae_.get(); }
    Transition& transition() { return *transition_; }
    const Transition& transition() const { return *transition_; }

    struct Seeded {
        CAState state;
        Var context;  // AE skip tensor; undefined in input space
    };
    /// Encodes without recording (the AE is frozen while the NCA runs).
    Seeded seed(const Var& corrupted) const;
    /// Decodes the visible channels with the skip context, or returns them.
    Var readout(const CAState& state, const Var& context) const;
    /// Target for the latent-space loss: encode(clean).latent, unrecorded.
    Var target_latent(const Var& clean) const;
    Var restore(const Var& corrupted, int steps, std::uint64_t seed) const;

   private:
    ModelConfig config_;
    std::unique_ptr<Autoencoder> ae_;
    std::unique_ptr<Transition> transition_;
};

}  // namespace lnca
