#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "lnca/model.hpp"
#include "lnca/training.hpp"

namespace lnca::inline LNCA_PRECISION {

struct BenchRecord {
    ModelKind model = ModelKind::kLatentNAFCA;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t batch = 0;
    int steps = 0;
    /// Peak tracked bytes above the pre-step baseline (parameters and
    /// optimizer state excluded). Identical for every repeat.
    std::int64_t peak_state_bytes = 0;
    double mean_latency_s = 0;
    double stddev_latency_s = 0;
    int repeats = 0;
    /// The configuration hit the byte budget; only the key fields are valid.
    bool over_budget = false;
};

struct BenchOptions {
    int repeats = 10;
    /// Budget on state bytes above the baseline; 0 disables.
    std::int64_t byte_budget = 0;
    std::uint64_t seed = 0;
    /// Transition and AE sizes; kind and visible channels follow `model`.
    ModelConfig base;
};

/// Result of one inference benchmark; `input` and `output` are the images of
/// the last timed run so callers can write difference maps.
struct InferenceRun {
    BenchRecord record;
    ImageBatch input;
    ImageBatch output;
};

/// Times repeats + 1 full forward + loss + backward + Adam steps with
/// t_steps NCA steps each, discarding the first run.
BenchRecord bench_training_step(ModelKind model, std::int64_t resolution, std::int64_t batch, int t_steps,
                                const BenchOptions& options);
/// Forward-only restoration timing with no gradient recording.
InferenceRun bench_inference(ModelKind model, std::int64_t resolution, std::int64_t batch, int t_steps,
                             const BenchOptions& options);

/// Analytic multiply-accumulate count of one restoration of a single image:
/// every convolution, the attention products and the AE passes. Elementwise
/// work is not counted.
std::int64_t inference_macs(const ModelConfig& config, std::int64_t height, std::int64_t width, int t_steps);

/// Channel-mean absolute difference of image `index`, as a [1,H,W,1] map.
Tensor difference_map(const ImageBatch& a, const ImageBatch& b, std::int64_t index = 0);

/// CSV with columns model,resolution,batch,steps,peak_state_bytes,
/// mean_latency_s,stddev_latency_s,repeats. Over-budget rows carry "--".
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records);

}  // namespace lnca
