#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lnca/corruption.hpp"
#include "lnca/metrics.hpp"
#include "lnca/model.hpp"
#include "lnca/pool.hpp"

namespace lnca::inline LNCA_PRECISION {

struct LossWeights {
    double w_rec_ae = 1;
    double w_dist = 1;
    double w_task = 1;
    double w_eq = 1;
    double w_rec_nca = 1;
    double w_lat = 1;
    double w_over = 1;
    double margin_alpha = 0.2;
    double eq_noise_var = 1e-3;

    void validate() const;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 8;
    AdamConfig adam;
    /// Cosine annealing floor reached at the end of training.
    double min_lr = 1e-5;
    std::uint64_t seed = 0;
    /// Training corruption; its seed is replaced per batch.
    CorruptionSpec corruption;
    bool curriculum = false;
    double min_severity = 0.05;
    double max_severity = 0.1;
    int min_steps = 8;
    int max_steps = 32;
    int eval_steps = 64;
    std::size_t pool_size = 1024;
    /// Validation cadence in epochs; the last epoch is always validated. 0 disables.
    int val_every = 1;

    void validate() const;
    /// Training severity for `epoch` (curriculum ramp or the fixed severity).
    double severity_at(int epoch) const;
};

/// Adam with bias correction. Parameters that received no gradient in a step
/// are left untouched.
class Adam {
   public:
    Adam(std::vector<Var> params, const AdamConfig& config);

    void step(double lr);
    void zero_grad();
    std::int64_t steps() const { return steps_; }

   private:
    std::vector<Var> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamConfig config_;
    std::int64_t steps_ = 0;
};

/// Cosine annealing from lr_max at epoch 0 towards lr_min over total_epochs.
double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min);

/// Named scalar terms with their weights; total = sum(weights * terms).
struct LossTerms {
    std::vector<std::string> names;
    std::vector<Var> terms;
    std::vector<real> weights;
    Var total;

    void add(std::string name, Var term, double weight);
    void finish();
    double value(const std::string& name) const;
};

/// max{0, MSE(za, zp) - MSE(za, zn) + alpha}.
Var dist_loss(const Var& za, const Var& zp, const Var& zn, real alpha);
/// MSE(a * m, b * m), averaged over every element.
Var masked_mse(const Var& a, const Var& b, const Var& mask);
/// Sum of |x - clip(x)| over the state divided by channels x cells; visible
/// channels clip to [0, 1], hidden channels to [-1, 1].
Var overflow_loss(const CAState& state);

/// Reconstruction over anchor/positive/negative, distance hinge and the
/// masked task term, from one encoder pass over the stacked triplet batch.
LossTerms loss_phase1_step1(const TripletBatch& batch, const Autoencoder& ae, const LossWeights& w);
/// Swapped-latent equivalence: D(za + eps, skip_p) vs x_A and D(zp, skip_a) vs x_P, masked.
LossTerms loss_phase1_step2(const TripletBatch& batch, const Autoencoder& ae, const LossWeights& w,
                            std::uint64_t seed);
/// Image reconstruction, latent match (latent models only) and overflow.
LossTerms loss_phase2(const Var& clean, const Var& restored, const Var& target_latent, const CAState& state,
                      const LossWeights& w, bool latent);

struct LossRecord {
    int epoch = 0;
    std::string split;
    std::string term;
    double value = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

struct TrainResult {
    std::vector<LossRecord> curve;
    std::int64_t optimizer_steps = 0;
    double seconds = 0;
};

/// Phase 1. Two optimizer steps per batch; only AE parameters change.
TrainResult train_ae(Autoencoder& ae, const ImageBatch& train, const ImageBatch& val, const TrainConfig& config,
                     const LossWeights& w, const ProgressFn& progress = {});
/// Phase 2 with pool sampling; the autoencoder is frozen in eval mode.
TrainResult train_nca(RestorationModel& model, const ImageBatch& train, const ImageBatch& val,
                      const TrainConfig& config, const LossWeights& w, ReplayPool& pool,
                      const ProgressFn& progress = {});

struct EvalResult {
    ImageBatch corrupted;
    ImageBatch restored;
    SSIMResult ssim_restored;
    SSIMResult ssim_corrupted;
    std::vector<ErrorMetrics> errors;
};

/// Corrupts `clean` per image, restores in eval mode with `steps` NCA steps.
EvalResult evaluate(RestorationModel& model, const ImageBatch& clean, const CorruptionSpec& spec, int steps,
                    std::uint64_t seed, int batch_size = 16);
/// Restores already corrupted images in eval mode.
ImageBatch restore_images(RestorationModel& model, const ImageBatch& corrupted, int steps, std::uint64_t seed,
                          int batch_size = 16);

/// CSV with columns epoch,split,term,value after a schema-version comment.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace lnca
