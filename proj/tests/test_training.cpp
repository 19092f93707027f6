#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "lnca/dataset.hpp"
#include "lnca/training.hpp"
#include "support/gradcheck.hpp"

using namespace lnca;
using lnca::testing::random_tensor;

namespace {

double val(const Var& v) { return v.value()[0]; }

AEConfig tiny_ae(std::int64_t side, int stages) {
    AEConfig c;
    c.height = c.width = side;
    c.downsample_stages = stages;
    c.base_filters = 4;
    c.latent_channels = 2;
    c.skip_channels = 2;
    return c;
}

ModelConfig tiny_model(std::int64_t side) {
    ModelConfig m;
    m.ae = tiny_ae(side, 2);
    m.transition.hidden_channels = 4;
    return m;
}

std::map<int, double> epoch_totals(const TrainResult& r) {
    std::map<int, double> out;
    for (const auto& rec : r.curve)
        if (rec.split == "train" && (rec.term == "step1_total" || rec.term == "step2_total")) out[rec.epoch] += rec.value;
    return out;
}

// Batch-norm statistics from one unrecorded train-mode pass, then eval mode.
void settle(Autoencoder& ae, const ImageBatch& x) {
    NoGradGuard g;
    ae.set_mode(Mode::kTrain);
    ae.forward_bypass(Var(x));
    ae.set_mode(Mode::kEval);
}

}  // namespace

TEST_CASE("distance hinge: equal latents give alpha, satisfied margin gives zero") {
    Rng rng(3);
    const Var z(random_tensor({2, 2, 2, 3}, rng));
    CHECK(val(dist_loss(z, z, z, real(0.2))) == real(0.2));

    Var za(random_tensor({2, 2, 2, 3}, rng)), zp = za;
    Tensor far = za.value();
    for (real& v : far.data()) v += real(2);  // MSE(za, zn) = 4 >= 0 + alpha
    Var zn(far);
    za.set_requires_grad(true);
    zn.set_requires_grad(true);
    Tape tape;
    const Var d = dist_loss(za, zp, zn, real(0.2));
    CHECK(val(d) == 0);
    tape.backward(d);
    // Inactive hinge passes no gradient.
    for (real g : za.grad().data()) CHECK(g == 0);
    for (real g : zn.grad().data()) CHECK(g == 0);
}

TEST_CASE("task term vanishes under an empty mask") {
    Rng rng(4);
    const Var a(random_tensor({2, 3, 3, 3}, rng, 0, 1)), b(random_tensor({2, 3, 3, 3}, rng, 0, 1));
    CHECK(val(masked_mse(a, b, Var(Tensor::zeros_like(a.value())))) == 0);

    Autoencoder ae(tiny_ae(8, 1));
    const ImageBatch clean = synthesize_toy_images(2, 8, 8, 1).images;
    const TripletBatch tb = make_triplets(clean, {CorruptionKind::kGaussianNoise, 0.0, 1});
    CHECK(tb.mask.sum() == 0);
    const LossTerms t = loss_phase1_step1(tb, ae, {});
    CHECK(t.value("task") == 0);
    TripletBatch missing = tb;
    missing.mask = Tensor();
    CHECK_THROWS_AS(loss_phase1_step1(missing, ae, {}), std::invalid_argument);
}

TEST_CASE("overflow loss: zero in range, hand values outside") {
    Tensor cells(Shape{1, 2, 2, 4});  // 2 visible + 2 hidden channels, 4 cells
    for (std::int64_t i = 0; i < cells.numel(); ++i) cells[i] = (i % 4 < 2) ? real(0.5) : real(-0.9);
    CAState s{Var(cells), 2, 0};
    CHECK(val(overflow_loss(s)) == 0);

    cells[0] = real(1.5);  // visible overflow 0.5
    CHECK(val(overflow_loss(CAState{Var(cells), 2, 0})) == doctest::Approx(0.5 / 16).epsilon(1e-6));
    cells[3] = real(-1.25);  // hidden overflow 0.25
    CHECK(val(overflow_loss(CAState{Var(cells), 2, 0})) == doctest::Approx(0.75 / 16).epsilon(1e-6));
    cells[3] = real(0.75);  // inside the hidden range [-1, 1]
    CHECK(val(overflow_loss(CAState{Var(cells), 2, 0})) == doctest::Approx(0.5 / 16).epsilon(1e-6));
}

TEST_CASE("phase-2 loss: perfect restoration is zero and total is the weighted sum") {
    Rng rng(5);
    const Var y(random_tensor({2, 8, 8, 3}, rng, 0, 1));
    const Var z(random_tensor({2, 2, 2, 4}, rng, 0.1, 0.9));
    const CAState perfect = seed_state(z, 3);
    LossWeights w;
    const LossTerms zero = loss_phase2(y, y, z, perfect, w, true);
    CHECK(val(zero.total) == 0);

    w.w_rec_nca = 0.5;
    w.w_lat = 2;
    w.w_over = 3;
    Tensor cells = perfect.cells.value();
    cells[0] = real(1.4);
    cells[6] = real(-2);
    const CAState off{Var(cells), 4, 0};
    const Var x(random_tensor({2, 8, 8, 3}, rng, 0, 1));
    const LossTerms t = loss_phase2(y, x, z, off, w, true);
    double dot = 0;
    for (std::size_t i = 0; i < t.terms.size(); ++i) {
        CHECK(val(t.terms[i]) >= 0);
        dot += double(t.weights[i]) * val(t.terms[i]);
    }
    CHECK(t.names == std::vector<std::string>{"rec", "lat", "over"});
    CHECK(val(t.total) == doctest::Approx(dot).epsilon(1e-6));
    CHECK(loss_phase2(y, x, z, off, w, false).names == std::vector<std::string>{"rec", "over"});
}

TEST_CASE("equivalence loss: degenerate corruption and hand-evaluated swap") {
    LossWeights w;
    w.eq_noise_var = 0;
    Autoencoder ae(tiny_ae(2, 1));
    const ImageBatch clean = synthesize_toy_images(2, 2, 2, 9).images;
    settle(ae, clean);
    const TripletBatch same = make_triplets(clean, {CorruptionKind::kGaussianNoise, 0.0, 1});
    CHECK(val(loss_phase1_step2(same, ae, w, 1).total) == 0);

    // 2x2 images, frozen (eval-mode) decoder, noise-free swap: recompute
    // x_A* = D(z_A, skip_P), x_P* = D(z_P, skip_A) per image and the masked
    // MSEs with plain loops.
    w.w_eq = 2;
    const TripletBatch tb = make_triplets(clean, {CorruptionKind::kGaussianNoise, 0.3, 4});
    REQUIRE(tb.mask.sum() > 0);
    const double loss = val(loss_phase1_step2(tb, ae, w, 1).total);
    NoGradGuard g;
    const EncodeOutput ea = ae.encode(Var(tb.anchor)), ep = ae.encode(Var(tb.positive));
    const Tensor xa = ae.decode(ea.latent, ep.skip).value(), xp = ae.decode(ep.latent, ea.skip).value();
    double sa = 0, sp = 0;
    const std::int64_t n = xa.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double m = tb.mask[i];
        sa += std::pow(m * tb.anchor[i] - m * xa[i], 2);
        sp += std::pow(m * tb.positive[i] - m * xp[i], 2);
    }
    CHECK(loss == doctest::Approx(2 * (sa + sp) / double(n)).epsilon(1e-5));
    CHECK(loss >= 0);
}

TEST_CASE("Adam first step and cosine schedule") {
    Var p(Tensor(Shape{3}, {real(1), real(-2), real(0.5)}));
    p.set_requires_grad(true);
    AdamConfig cfg;
    Adam opt({p}, cfg);
    {
        Tape tape;
        // d/dp sum(p^2 * c) = 2 c p with c = 1/3 from the mean
        tape.backward(mean_all(mul(p, p)));
    }
    const Tensor g = p.grad();
    const Tensor before = p.value();
    opt.step(0.1);
    for (std::int64_t i = 0; i < 3; ++i) {
        // bias-corrected first step: lr * g / (|g| + eps)
        const double expect = before[i] - 0.1 * g[i] / (std::abs(double(g[i])) + cfg.eps);
        CHECK(p.value()[i] == doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK(opt.steps() == 1);

    CHECK(cosine_lr(0, 10, 1e-3, 1e-5) == doctest::Approx(1e-3));
    CHECK(cosine_lr(5, 10, 1e-3, 1e-5) == doctest::Approx(0.5 * (1e-3 + 1e-5)));
    CHECK(cosine_lr(9, 10, 1e-3, 1e-5) > 1e-5);
    CHECK_THROWS(cosine_lr(10, 10, 1e-3, 1e-5));
    for (int e = 1; e < 10; ++e) CHECK(cosine_lr(e, 10, 1e-3, 1e-5) < cosine_lr(e - 1, 10, 1e-3, 1e-5));
}

TEST_CASE("train config and loss weight validation") {
    TrainConfig t;
    t.epochs = 0;
    CHECK_THROWS(t.validate());
    t = {};
    t.adam.lr = 0;
    CHECK_THROWS(t.validate());
    LossWeights w;
    w.margin_alpha = 0;
    CHECK_THROWS(w.validate());
    w = {};
    w.w_eq = -1;
    CHECK_THROWS(w.validate());
    t = {};
    t.curriculum = true;
    t.epochs = 3;
    CHECK(t.severity_at(0) == doctest::Approx(t.min_severity));
    CHECK(t.severity_at(2) == doctest::Approx(t.max_severity));
}

TEST_CASE("train_ae: two optimizer steps per batch, NCA untouched, reproducible") {
    const ImageBatch toy = synthesize_toy_images(16, 16, 16, 2).images;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.val_every = 0;
    RestorationModel model(tiny_model(16));
    const std::uint64_t nca_before = model.transition().checksum();
    const TrainResult r = train_ae(*model.autoencoder(), toy, ImageBatch(), cfg, {});
    CHECK(r.optimizer_steps == 2 * 2);
    CHECK(model.transition().checksum() == nca_before);
    for (const auto& p : model.transition().parameters()) CHECK_FALSE(p.var.has_grad());

    RestorationModel again(tiny_model(16));
    train_ae(*again.autoencoder(), toy, ImageBatch(), cfg, {});
    CHECK(again.autoencoder()->checksum() == model.autoencoder()->checksum());

    CHECK_THROWS_AS(train_ae(*model.autoencoder(), image_at(toy, 0), ImageBatch(), cfg, {}), std::invalid_argument);
}

TEST_CASE("train_ae loss decreases on the toy set") {
    const ImageBatch toy = synthesize_toy_images(16, 32, 32, 7).images;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.val_every = 0;
    Autoencoder ae(AEConfig{});
    const auto totals = epoch_totals(train_ae(ae, toy, ImageBatch(), cfg, {}));
    REQUIRE(totals.size() == 10);
    int rises = 0;
    for (int e = 1; e < 10; ++e) rises += totals.at(e) >= totals.at(e - 1);
    CHECK(rises <= 2);
    CHECK(totals.at(9) < totals.at(0));
}

TEST_CASE("train_nca: frozen AE, bounded pool, validation SSIM improves") {
    const ImageBatch toy = synthesize_toy_images(8, 32, 32, 3).images;
    RestorationModel model(ModelConfig{});
    ReplayPool pool(1024, 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    CHECK_THROWS_AS(train_nca(model, toy, ImageBatch(), cfg, {}, pool), std::logic_error);

    TrainConfig ae_cfg;
    ae_cfg.epochs = 40;
    ae_cfg.batch_size = 4;
    ae_cfg.adam.lr = 2e-3;
    ae_cfg.val_every = 0;
    LossWeights w;
    w.w_rec_ae = 0.1;
    w.w_task = 0.1;
    w.w_eq = 10;
    train_ae(*model.autoencoder(), toy, ImageBatch(), ae_cfg, w);
    const std::uint64_t ae_before = model.autoencoder()->checksum();

    cfg.epochs = 12;
    cfg.adam.lr = 1e-3;
    cfg.min_steps = 8;
    cfg.max_steps = 16;
    cfg.eval_steps = 16;
    cfg.val_every = 11;
    const TrainResult r = train_nca(model, toy, toy, cfg, w, pool);
    CHECK(model.autoencoder()->checksum() == ae_before);
    for (const auto& p : model.autoencoder()->parameters()) CHECK_FALSE(p.var.has_grad());
    CHECK(pool.size() <= pool.capacity());
    CHECK(r.optimizer_steps == 12 * 2);
    std::vector<double> ssim_curve;
    for (const auto& rec : r.curve)
        if (rec.split == "val" && rec.term == "ssim") ssim_curve.push_back(rec.value);
    REQUIRE(ssim_curve.size() == 2);  // epochs 0 and 11
    CHECK(ssim_curve.back() > ssim_curve.front());
}

TEST_CASE("loss CSV carries the schema version") {
    const auto path = std::filesystem::temp_directory_path() / "lnca_loss_test.csv";
    write_loss_csv(path, {{0, "train", "rec", 0.5}, {1, "val", "ssim", 0.25}});
    std::ifstream in(path);
    std::string first, header, row;
    std::getline(in, first);
    std::getline(in, header);
    std::getline(in, row);
    CHECK(first == "# schema_version: 1");
    CHECK(header == "epoch,split,term,value");
    CHECK(row.rfind("0,train,rec,0.5", 0) == 0);
    std::filesystem::remove(path);
}
