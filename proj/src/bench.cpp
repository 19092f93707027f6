#include "lnca/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "lnca/dataset.hpp"
#include "lnca/rng.hpp"
#include "lnca/version.hpp"

namespace lnca::inline LNCA_PRECISION {

namespace {

using Clock = std::chrono::steady_clock;

ModelConfig config_for(ModelKind kind, std::int64_t resolution, const BenchOptions& o) {
    if (resolution < 1) throw std::invalid_argument("bench resolution must be positive");
    ModelConfig c = o.base;
    c.kind = kind;
    c.ae.height = resolution;
    c.ae.width = resolution;
    return c;
}

ImageBatch bench_inputs(std::int64_t resolution, std::int64_t batch, std::uint64_t seed) {
    if (batch < 1) throw std::invalid_argument("bench batch must be positive");
    const ImageBatch clean =
        synthesize_toy_images(static_cast<int>(batch), resolution, resolution, derive_seed(seed, {0xbe}))
            .images;
    return corrupt(clean, {CorruptionKind::kGaussianNoise, 0.1, derive_seed(seed, {0xbf})});
}

// A randomly initialised AE in eval mode needs batch-norm statistics; one
// unrecorded train-mode pass provides them.
void prepare(RestorationModel& model, const ImageBatch& images) {
    if (Autoencoder* ae = model.autoencoder()) {
        NoGradGuard guard;
        ae->set_mode(Mode::kTrain);
        ae->forward_bypass(Var(images));
        ae->set_mode(Mode::kEval);
        ae->set_trainable(false);
    }
}

void summarize(BenchRecord& r, const std::vector<double>& times) {
    r.repeats = static_cast<int>(times.size());
    r.mean_latency_s = std::accumulate(times.begin(), times.end(), 0.0) / double(times.size());
    double ss = 0;
    for (double t : times) ss += (t - r.mean_latency_s) * (t - r.mean_latency_s);
    r.stddev_latency_s = times.size() > 1 ? std::sqrt(ss / double(times.size() - 1)) : 0.0;
}

BenchRecord key(ModelKind kind, std::int64_t resolution, std::int64_t batch, int steps) {
    BenchRecord r;
    r.model = kind;
    r.height = r.width = resolution;
    r.batch = batch;
    r.steps = steps;
    return r;
}

// Runs `run` repeats + 1 times under the budget; the first run is discarded.
template <class Fn>
BenchRecord timed(BenchRecord r, const BenchOptions& o, Fn&& run) {
    if (o.repeats < 1) throw std::invalid_argument("bench repeats must be >= 1");
    std::vector<double> times;
    try {
        for (int i = 0; i <= o.repeats; ++i) {
            const std::int64_t base = MemoryTracker::live();
            ScopedByteBudget budget(o.byte_budget > 0 ? base + o.byte_budget : 0);
            MemoryTracker::reset_peak();
            const auto t0 = Clock::now();
            run(i);
            const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
            // The warm-up run also allocates persistent optimizer moments.
            if (i == 0) continue;
            r.peak_state_bytes = std::max(r.peak_state_bytes, MemoryTracker::peak() - base);
            times.push_back(dt);
        }
    } catch (const ByteBudgetExceeded&) {
        r.over_budget = true;
        r.peak_state_bytes = 0;
        return r;
    }
    summarize(r, times);
    return r;
}

std::int64_t transition_macs_per_cell(const TransitionConfig& t, bool positional) {
    const std::int64_t C = t.state_channels();
    if (t.kind == TransitionKind::kViTCA) {
        const std::int64_t E = t.embed_dim, M = t.mlp_hidden;
        const std::int64_t in = C + (positional ? kPositionalChannels : 0);
        // embed, qkv, 9-neighbour scores and weighted sum, proj, mlp, head
        return in * E + E * 3 * E + 2 * 9 * E + E * E + 2 * E * M + E * C;
    }
    const std::int64_t P = t.perception_width ? t.perception_width : 2 * C;
    const std::int64_t U = t.update_width ? t.update_width : 2 * C;
    return C * P + 9 * (P / 2) + (P / 2) * C + C * U + (U / 2) * C + C * C;
}

}  // namespace

BenchRecord bench_training_step(ModelKind kind, std::int64_t resolution, std::int64_t batch, int t_steps,
                                const BenchOptions& o) {
    if (t_steps < 1) throw std::invalid_argument("bench steps must be >= 1");
    RestorationModel model(config_for(kind, resolution, o));
    const ImageBatch corrupted = bench_inputs(resolution, batch, o.seed);
    const Var clean(corrupted);
    prepare(model, corrupted);
    Transition& tr = model.transition();
    tr.set_mode(Mode::kTrain);
    std::vector<Var> params;
    for (const auto& p : tr.parameters()) params.push_back(p.var);
    Adam opt(params, {});
    const LossWeights w;
    return timed(key(kind, resolution, batch, t_steps), o, [&](int i) {
        const std::uint64_t s = derive_seed(o.seed, {0x7472, std::uint64_t(i)});
        Tape tape;
        const RestorationModel::Seeded seeded = model.seed(Var(corrupted));
        const Var target = model.target_latent(clean);
        const CAState out = tr.rollout(seeded.state, t_steps, s);
        const Var restored = model.readout(out, seeded.context);
        const LossTerms terms = loss_phase2(clean, restored, target, out, w, model.latent());
        tape.backward(terms.total);
        opt.step(1e-4);
        opt.zero_grad();
    });
}

InferenceRun bench_inference(ModelKind kind, std::int64_t resolution, std::int64_t batch, int t_steps,
                             const BenchOptions& o) {
    if (t_steps < 1) throw std::invalid_argument("bench steps must be >= 1");
    RestorationModel model(config_for(kind, resolution, o));
    InferenceRun run;
    run.input = bench_inputs(resolution, batch, o.seed);
    prepare(model, run.input);
    model.transition().set_mode(Mode::kEval);
    run.record = timed(key(kind, resolution, batch, t_steps), o, [&](int i) {
        NoGradGuard guard;
        run.output = model.restore(Var(run.input), t_steps, derive_seed(o.seed, {0x696e, std::uint64_t(i)})).value();
    });
    if (run.record.over_budget) run.output = ImageBatch();
    return run;
}

std::int64_t inference_macs(const ModelConfig& config, std::int64_t h, std::int64_t w, int t_steps) {
    const TransitionConfig t = resolved(config).transition;
    if (config.kind == ModelKind::kInputViTCA) return std::int64_t{t_steps} * h * w * transition_macs_per_cell(t, t.positional_encoding);
    const AEConfig& a = config.ae;
    const std::int64_t F = a.base_filters, n = a.downsample_stages;
    auto width_at = [&](std::int64_t s) { return F << s; };
    auto cells_at = [&](std::int64_t s) { return (h >> s) * (w >> s); };
    std::int64_t macs = cells_at(0) * (9 * a.channels * F + F * a.skip_channels);
    for (std::int64_t s = 0; s < n; ++s) macs += cells_at(s + 1) * 9 * width_at(s) * width_at(s + 1);
    macs += cells_at(n) * 9 * width_at(n) * a.latent_channels;
    macs += cells_at(n) * 9 * a.latent_channels * width_at(n);
    for (std::int64_t s = n - 1; s >= 0; --s) {
        const std::int64_t out = s == 0 ? a.skip_channels : width_at(s);
        macs += cells_at(s + 1) * 9 * width_at(s + 1) * out;
    }
    if (n == 0) macs += cells_at(0) * 9 * width_at(0) * a.skip_channels;
    macs += cells_at(0) * 9 * a.skip_channels * a.channels;
    return macs + std::int64_t{t_steps} * cells_at(n) * transition_macs_per_cell(t, t.positional_encoding);
}

Tensor difference_map(const ImageBatch& a, const ImageBatch& b, std::int64_t index) {
    if (a.shape() != b.shape()) throw std::invalid_argument("difference_map: shape mismatch");
    const Dims4 d = dims4(a, "difference_map");
    if (index < 0 || index >= d.b) throw std::out_of_range("difference_map: image index out of range");
    Tensor map(Shape{1, d.h, d.w, 1});
    for (std::int64_t p = 0; p < d.h * d.w; ++p) {
        real acc = 0;
        for (std::int64_t c = 0; c < d.c; ++c) {
            const std::int64_t i = (index * d.h * d.w + p) * d.c + c;
            acc += std::abs(a[i] - b[i]);
        }
        map[p] = acc / real(d.c);
    }
    return map;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path.string());
    out << "# schema_version: " << kSchemaVersion << "\n";
    out << "model,resolution,batch,steps,peak_state_bytes,mean_latency_s,stddev_latency_s,repeats\n";
    out.precision(9);
    for (const BenchRecord& r : records) {
        out << to_string(r.model) << ',' << r.height << 'x' << r.width << ',' << r.batch << ',' << r.steps << ',';
        if (r.over_budget)
            out << "--,--,--,0\n";
        else
            out << r.peak_state_bytes << ',' << r.mean_latency_s << ',' << r.stddev_latency_s << ',' << r.repeats
                << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace lnca
