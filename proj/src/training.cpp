#include "lnca/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lnca/dataset.hpp"
#include "lnca/version.hpp"

namespace lnca::inline LNCA_PRECISION {

void LossWeights::validate() const {
    for (double v : {w_rec_ae, w_dist, w_task, w_eq, w_rec_nca, w_lat, w_over, eq_noise_var})
        if (!(v >= 0)) throw std::invalid_argument("loss weights and eq_noise_var must be >= 0");
    if (!(margin_alpha > 0)) throw std::invalid_argument("margin_alpha must be > 0");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2 (derangement negatives)");
    if (!(adam.lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (!(min_lr >= 0) || min_lr > adam.lr) throw std::invalid_argument("min_lr must lie in [0, lr]");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0))
        throw std::invalid_argument("invalid Adam hyperparameters");
    if (min_steps < 1 || max_steps < min_steps || eval_steps < 1) throw std::invalid_argument("invalid step range");
    if (curriculum && min_severity > max_severity) throw std::invalid_argument("curriculum min exceeds max");
    if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
    if (val_every < 0) throw std::invalid_argument("val_every must be >= 0");
}

double TrainConfig::severity_at(int epoch) const {
    return curriculum ? curriculum_severity(epoch, epochs, min_severity, max_severity) : corruption.severity;
}

Adam::Adam(std::vector<Var> params, const AdamConfig& config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros_like(p.value()));
        v_.push_back(Tensor::zeros_like(p.value()));
    }
}

void Adam::step(double lr) {
    ++steps_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1 - std::pow(b1, double(steps_)), c2 = 1 - std::pow(b2, double(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Tensor& w = p.mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < w.numel(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1 - b1) * gj;
            const double vj = b2 * v[j] + (1 - b2) * gj * gj;
            m[j] = static_cast<real>(mj);
            v[j] = static_cast<real>(vj);
            w[j] -= static_cast<real>(lr * (mj / c1) / (std::sqrt(vj / c2) + config_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
    if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) throw std::out_of_range("cosine_lr epoch out of range");
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + std::cos(std::numbers::pi * epoch / total_epochs));
}

void LossTerms::add(std::string name, Var term, double weight) {
    names.push_back(std::move(name));
    terms.push_back(std::move(term));
    weights.push_back(static_cast<real>(weight));
}

void LossTerms::finish() { total = weighted_sum(terms, weights); }

double LossTerms::value(const std::string& name) const {
    if (name == "total") return total.value()[0];
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return terms[i].value()[0];
    throw std::out_of_range("no loss term " + name);
}

namespace {

Var scalar(real v) { return Var(Tensor(Shape{1}, {v})); }

std::vector<std::int64_t> shuffled(std::int64_t n, std::uint64_t seed) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)], idx[rng.below(static_cast<std::uint64_t>(i + 1))]);
    return idx;
}

// Batches of the shuffled order; a trailing singleton joins the previous batch.
std::vector<std::vector<std::int64_t>> batches_of(const std::vector<std::int64_t>& order, int batch) {
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch))
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(batch))));
    if (out.size() > 1 && out.back().size() == 1) {
        out[out.size() - 2].push_back(out.back()[0]);
        out.pop_back();
    }
    return out;
}

std::vector<Var> params_of(const Module& m) {
    std::vector<Var> out;
    for (const auto& p : m.parameters()) out.push_back(p.var);
    return out;
}

void record_terms(std::vector<LossRecord>& curve, int epoch, const std::string& split,
                  const std::vector<std::pair<std::string, double>>& sums, double count) {
    for (const auto& [name, s] : sums) curve.push_back({epoch, split, name, s / count});
}

void accumulate(std::vector<std::pair<std::string, double>>& sums, const LossTerms& t, const std::string& prefix) {
    auto put = [&](const std::string& name, double v) {
        for (auto& [n, s] : sums)
            if (n == name) {
                s += v;
                return;
            }
        sums.emplace_back(name, v);
    };
    for (std::size_t i = 0; i < t.names.size(); ++i) put(t.names[i], t.terms[i].value()[0]);
    put(prefix + "total", t.total.value()[0]);
}

bool validate_epoch(const TrainConfig& c, int epoch) {
    return c.val_every > 0 && (epoch % c.val_every == 0 || epoch == c.epochs - 1);
}

std::string format_terms(const std::vector<std::pair<std::string, double>>& sums, double count) {
    std::ostringstream os;
    for (const auto& [n, s] : sums) os << " " << n << "=" << s / count;
    return os.str();
}

}  // namespace

Var dist_loss(const Var& za, const Var& zp, const Var& zn, real alpha) {
    return relu(add(sub(mse(za, zp), mse(za, zn)), scalar(alpha)));
}

Var masked_mse(const Var& a, const Var& b, const Var& mask) { return mse(mul(a, mask), mul(b, mask)); }

Var overflow_loss(const CAState& state) {
    const std::int64_t c = state.cells.dim(3), cv = state.visible_channels, ch = c - cv;
    // l1_clip_norm is a mean, so reweight each part by its channel share.
    std::vector<Var> parts{l1_clip_norm(state.visible(), 0, 1)};
    std::vector<real> weights{static_cast<real>(double(cv) / double(c))};
    if (ch > 0) {
        parts.push_back(l1_clip_norm(state.hidden(), -1, 1));
        weights.push_back(static_cast<real>(double(ch) / double(c)));
    }
    return weighted_sum(parts, weights);
}

LossTerms loss_phase1_step1(const TripletBatch& batch, const Autoencoder& ae, const LossWeights& w) {
    if (batch.mask.empty()) throw std::invalid_argument("triplet batch has no mask");
    const std::int64_t b = batch.anchor.dim(0);
    const Var a(batch.anchor), p(batch.positive), n(batch.negative), m(batch.mask);
    const Var all_parts[] = {a, p, n};
    const Var x = concat_batch(all_parts);
    const EncodeOutput e = ae.encode(x);
    const Var rec = ae.decode(e.latent, e.skip);
    LossTerms t;
    t.add("rec", mse(rec, x), w.w_rec_ae);
    t.add("dist", dist_loss(slice_batch(e.latent, 0, b), slice_batch(e.latent, b, b), slice_batch(e.latent, 2 * b, b),
                            static_cast<real>(w.margin_alpha)),
          w.w_dist);
    t.add("task", masked_mse(p, slice_batch(rec, b, b), m), w.w_task);
    t.finish();
    return t;
}

LossTerms loss_phase1_step2(const TripletBatch& batch, const Autoencoder& ae, const LossWeights& w,
                            std::uint64_t seed) {
    const std::int64_t b = batch.anchor.dim(0);
    const Var a(batch.anchor), p(batch.positive), m(batch.mask);
    const Var ap[] = {a, p};
    const EncodeOutput e = ae.encode(concat_batch(ap));
    const Var za = slice_batch(e.latent, 0, b), zp = slice_batch(e.latent, b, b);
    const Var sa = slice_batch(e.skip, 0, b), sp = slice_batch(e.skip, b, b);
    Tensor eps(za.shape());
    if (w.eq_noise_var > 0) {
        Rng rng(seed);
        const double sd = std::sqrt(w.eq_noise_var);
        for (real& v : eps.data()) v = static_cast<real>(rng.normal() * sd);
    }
    const Var lat[] = {add(za, Var(std::move(eps))), zp};
    const Var skip[] = {sp, sa};
    const Var swapped = ae.decode(concat_batch(lat), concat_batch(skip));
    LossTerms t;
    t.add("eq", add(masked_mse(a, slice_batch(swapped, 0, b), m), masked_mse(p, slice_batch(swapped, b, b), m)), w.w_eq);
    t.finish();
    return t;
}

LossTerms loss_phase2(const Var& clean, const Var& restored, const Var& target_latent, const CAState& state,
                      const LossWeights& w, bool latent) {
    LossTerms t;
    t.add("rec", mse(clean, restored), w.w_rec_nca);
    if (latent) t.add("lat", mse(target_latent, state.visible()), w.w_lat);
    t.add("over", overflow_loss(state), w.w_over);
    t.finish();
    return t;
}

TrainResult train_ae(Autoencoder& ae, const ImageBatch& train, const ImageBatch& val, const TrainConfig& cfg,
                     const LossWeights& w, const ProgressFn& progress) {
    cfg.validate();
    w.validate();
    const std::int64_t n = dims4(train, "train_ae").b;
    if (n < 2) throw std::invalid_argument("train_ae needs at least 2 training images");
    const auto t0 = std::chrono::steady_clock::now();
    ae.set_trainable(true);
    Adam opt(params_of(ae), cfg.adam);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ae.set_mode(Mode::kTrain);
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.adam.lr, cfg.min_lr);
        CorruptionSpec spec = cfg.corruption;
        spec.severity = cfg.severity_at(epoch);
        std::vector<std::pair<std::string, double>> sums;
        const auto batches = batches_of(shuffled(n, derive_seed(cfg.seed, {0xae, std::uint64_t(epoch)})), cfg.batch_size);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            spec.seed = derive_seed(cfg.seed, {0xae, std::uint64_t(epoch), bi});
            const TripletBatch tb = make_triplets(gather_images(train, batches[bi]), spec);
            {
                Tape tape;
                const LossTerms t1 = loss_phase1_step1(tb, ae, w);
                tape.backward(t1.total);
                opt.step(lr);
                opt.zero_grad();
                accumulate(sums, t1, "step1_");
            }
            {
                Tape tape;
                const LossTerms t2 = loss_phase1_step2(tb, ae, w, derive_seed(spec.seed, {2}));
                tape.backward(t2.total);
                opt.step(lr);
                opt.zero_grad();
                accumulate(sums, t2, "step2_");
            }
        }
        record_terms(result.curve, epoch, "train", sums, double(batches.size()));
        std::string line = "ae epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) + " lr=" +
                           std::to_string(lr) + format_terms(sums, double(batches.size()));
        if (validate_epoch(cfg, epoch) && !val.empty() && val.dim(0) >= 2) {
            ae.set_mode(Mode::kEval);
            NoGradGuard guard;
            CorruptionSpec vs = cfg.corruption;
            vs.seed = derive_seed(cfg.seed, {0x7661});
            const TripletBatch tb = make_triplets(val, vs);
            std::vector<std::pair<std::string, double>> vsums;
            accumulate(vsums, loss_phase1_step1(tb, ae, w), "step1_");
            accumulate(vsums, loss_phase1_step2(tb, ae, w, vs.seed), "step2_");
            record_terms(result.curve, epoch, "val", vsums, 1);
            line += " | val" + format_terms(vsums, 1);
        }
        if (progress) progress(line);
    }
    ae.set_mode(Mode::kEval);
    result.optimizer_steps = opt.steps();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

TrainResult train_nca(RestorationModel& model, const ImageBatch& train, const ImageBatch& val, const TrainConfig& cfg,
                      const LossWeights& w, ReplayPool& pool, const ProgressFn& progress) {
    cfg.validate();
    w.validate();
    const std::int64_t n = dims4(train, "train_nca").b;
    if (n < 1) throw std::invalid_argument("train_nca needs training images");
    if (Autoencoder* ae = model.autoencoder()) {
        if (!ae->norm_stats().empty() && !ae->norm_stats().front().stats->initialized)
            throw std::logic_error("train_nca needs a trained autoencoder (batch-norm statistics missing)");
        ae->set_trainable(false);
        ae->set_mode(Mode::kEval);
    }
    const auto t0 = std::chrono::steady_clock::now();
    Transition& tr = model.transition();
    tr.set_trainable(true);
    Adam opt(params_of(tr), cfg.adam);
    TrainResult result;
    std::int64_t phase = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        tr.set_mode(Mode::kTrain);
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.adam.lr, cfg.min_lr);
        CorruptionSpec spec = cfg.corruption;
        spec.severity = cfg.severity_at(epoch);
        std::vector<std::pair<std::string, double>> sums;
        const auto batches = batches_of(shuffled(n, derive_seed(cfg.seed, {0xca, std::uint64_t(epoch)})), cfg.batch_size);
        for (std::size_t bi = 0; bi < batches.size(); ++bi, ++phase) {
            const std::uint64_t bseed = derive_seed(cfg.seed, {0xca, std::uint64_t(epoch), bi});
            const bool odd = phase % 2 == 0 || pool.empty();  // phases count from 1
            std::vector<std::int64_t> targets;
            std::vector<std::size_t> slots;
            CAState state;
            Var context;
            if (odd) {
                targets = batches[bi];
                spec.seed = bseed;
                const RestorationModel::Seeded s = model.seed(Var(corrupt(gather_images(train, targets), spec)));
                state = s.state;
                context = s.context;
            } else {
                slots = pool.sample(batches[bi].size(), derive_seed(bseed, {1}));
                std::vector<Tensor> cells, ctx;
                for (std::size_t slot : slots) {
                    const PoolEntry& e = pool.at(slot);
                    targets.push_back(e.target_id);
                    cells.push_back(e.cells);
                    if (!e.context.empty()) ctx.push_back(e.context);
                }
                state = CAState{Var(stack(cells)), tr.config().visible_channels, 0};
                if (!ctx.empty()) context = Var(stack(ctx));
            }
            const Var clean(gather_images(train, targets));
            const Var target = model.target_latent(clean);
            Rng srng(derive_seed(bseed, {2}));
            const int steps = static_cast<int>(srng.between(cfg.min_steps, cfg.max_steps));
            CAState out;
            {
                Tape tape;
                out = tr.rollout(state, steps, derive_seed(bseed, {3}));
                const Var restored = model.readout(out, context);
                const LossTerms t = loss_phase2(clean, restored, target, out, w, model.latent());
                tape.backward(t.total);
                opt.step(lr);
                opt.zero_grad();
                accumulate(sums, t, "");
            }
            const std::vector<Tensor> cells = unstack(out.cells.value());
            const std::vector<Tensor> ctx = context.defined() ? unstack(context.value()) : std::vector<Tensor>{};
            std::vector<PoolEntry> entries;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                PoolEntry e;
                e.cells = cells[i];
                if (!ctx.empty()) e.context = ctx[i];
                e.step = (odd ? 0 : pool.at(slots[i]).step) + steps;
                e.target_id = targets[i];
                entries.push_back(std::move(e));
            }
            if (odd) {
                pool.store(std::move(entries));
            } else {
                for (std::size_t i = 0; i < slots.size(); ++i) pool.replace(slots[i], std::move(entries[i]));
            }
        }
        record_terms(result.curve, epoch, "train", sums, double(batches.size()));
        std::string line = "nca epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) + " lr=" +
                           std::to_string(lr) + format_terms(sums, double(batches.size())) +
                           " pool=" + std::to_string(pool.size());
        if (validate_epoch(cfg, epoch) && !val.empty()) {
            CorruptionSpec vs = cfg.corruption;
            vs.seed = derive_seed(cfg.seed, {0x7661});
            const EvalResult ev = evaluate(model, val, vs, cfg.eval_steps, derive_seed(cfg.seed, {0x7662}));
            double mse_sum = 0;
            for (const auto& e : ev.errors) mse_sum += e.mse;
            result.curve.push_back({epoch, "val", "ssim", ev.ssim_restored.mean});
            result.curve.push_back({epoch, "val", "mse", mse_sum / double(ev.errors.size())});
            line += " | val ssim=" + std::to_string(ev.ssim_restored.mean) +
                    " (corrupted " + std::to_string(ev.ssim_corrupted.mean) + ")";
        }
        if (progress) progress(line);
    }
    tr.set_mode(Mode::kEval);
    result.optimizer_steps = opt.steps();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

ImageBatch restore_images(RestorationModel& model, const ImageBatch& corrupted, int steps, std::uint64_t seed,
                          int batch_size) {
    const Mode prev = model.transition().mode();
    model.transition().set_mode(Mode::kEval);
    if (Autoencoder* ae = model.autoencoder()) ae->set_mode(Mode::kEval);
    NoGradGuard guard;
    const std::int64_t n = dims4(corrupted, "restore").b;
    std::vector<ImageBatch> parts;
    for (std::int64_t i = 0; i < n; i += batch_size) {
        std::vector<std::int64_t> idx;
        for (std::int64_t j = i; j < std::min(n, i + batch_size); ++j) idx.push_back(j);
        parts.push_back(model.restore(Var(gather_images(corrupted, idx)), steps, derive_seed(seed, {std::uint64_t(i)})).value());
    }
    model.transition().set_mode(prev);
    return stack_images(parts);
}

EvalResult evaluate(RestorationModel& model, const ImageBatch& clean, const CorruptionSpec& spec, int steps,
                    std::uint64_t seed, int batch_size) {
    EvalResult r;
    r.corrupted = corrupt_per_image(clean, spec);
    r.restored = restore_images(model, r.corrupted, steps, seed, batch_size);
    r.ssim_restored = ssim(r.restored, clean);
    r.ssim_corrupted = ssim(r.corrupted, clean);
    r.errors = psnr_mse(r.restored, clean);
    return r;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path.string());
    out << "# schema_version: " << kSchemaVersion << "\n";
    out << "epoch,split,term,value\n";
    out.precision(9);
    for (const auto& r : curve) out << r.epoch << "," << r.split << "," << r.term << "," << r.value << "\n";
}

}  // namespace lnca
