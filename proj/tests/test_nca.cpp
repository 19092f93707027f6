#include <doctest.h>

#include <set>

#include "lnca/nca.hpp"
#include "lnca/pool.hpp"
#include "support/gradcheck.hpp"
#include "support/properties.hpp"

using namespace lnca;
using lnca::testing::random_tensor;

namespace {

bool same(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

TransitionConfig live_config(TransitionKind kind) {
    TransitionConfig c;
    c.kind = kind;
    c.visible_channels = 4;
    c.hidden_channels = 4;
    c.embed_dim = 16;
    c.heads = 2;
    c.mlp_hidden = 16;
    c.zero_init_head = false;
    c.update_probability = 1.0;
    return c;
}

}  // namespace

TEST_CASE("seed_state copies the latent and zeroes hidden channels") {
    Rng rng(1);
    Var latent(random_tensor({8, 8, 8, 16}, rng, 0, 1));
    const CAState s = seed_state(latent, 32);
    CHECK(s.cells.shape() == Shape{8, 8, 8, 48});
    CHECK(s.visible().shape() == Shape{8, 8, 8, 16});
    CHECK(s.hidden().shape() == Shape{8, 8, 8, 32});
    CHECK(same(s.visible().value(), latent.value()));
    CHECK(s.hidden().value().sum() == 0);
    CHECK(s.step == 0);
}

TEST_CASE("golden transition parameter counts") {
    TransitionConfig v;
    v.kind = TransitionKind::kViTCA;
    CHECK(ViTCATransition(v).parameter_count() == 39856);
    TransitionConfig in = v;
    in.visible_channels = 3;
    CHECK(ViTCATransition(in).parameter_count() == 38179);
    TransitionConfig n;
    CHECK(NAFCATransition(n).parameter_count() == 17185);
    v.heads = 3;
    CHECK_THROWS_AS(ViTCATransition{v}, std::invalid_argument);
    n.update_probability = 0;
    CHECK_THROWS_AS(NAFCATransition{n}, std::invalid_argument);
}

TEST_CASE("masked-out and zero-head steps leave the state unchanged") {
    for (auto kind : {TransitionKind::kViTCA, TransitionKind::kNAFCA}) {
        Rng rng(2);
        auto t = make_transition(live_config(kind));
        CAState s{Var(random_tensor({2, 5, 5, 8}, rng)), 4, 3};
        const CAState m = t->step(s, Tensor(Shape{2, 5, 5, 1}), 9);
        CHECK(same(m.cells.value(), s.cells.value()));
        CHECK(m.step == 4);

        TransitionConfig zc = live_config(kind);
        zc.zero_init_head = true;
        auto z = make_transition(zc);
        CHECK(same(z->step(s, 9).cells.value(), s.cells.value()));

        // Partial mask: masked cells bit-identical, others updated.
        Tensor half(Shape{2, 5, 5, 1});
        for (std::int64_t i = 0; i < half.numel(); i += 2) half[i] = 1;
        const Tensor out = t->step(s, half, 9).cells.value();
        for (std::int64_t r = 0; r < half.numel(); ++r)
            for (int c = 0; c < 8; ++c) {
                if (half[r] == 0) CHECK(out[r * 8 + c] == s.cells.value()[r * 8 + c]);
            }
    }
}

TEST_CASE("steps are reproducible and rollouts compose") {
    for (auto kind : {TransitionKind::kViTCA, TransitionKind::kNAFCA}) {
        Rng rng(3);
        TransitionConfig cfg = live_config(kind);
        cfg.update_probability = 0.5;
        auto t = make_transition(cfg);
        CAState s{Var(random_tensor({2, 4, 4, 8}, rng)), 4, 0};
        CHECK(same(t->step(s, 5).cells.value(), t->step(s, 5).cells.value()));
        CHECK(same(t->rollout(s, 1, 5).cells.value(), t->step(s, 5).cells.value()));
        const CAState full = t->rollout(s, 5, 11);
        const CAState split = t->rollout(t->rollout(s, 2, 11), 3, 11);
        CHECK(full.step == 5);
        CHECK(same(full.cells.value(), split.cells.value()));
        CHECK_THROWS_AS(t->rollout(s, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("one step is confined to the Moore neighbourhood") {
    for (auto kind : {TransitionKind::kViTCA, TransitionKind::kNAFCA}) {
        auto t = make_transition(live_config(kind));
        const auto r = lnca::testing::check_locality(*t, 20, 7);
        INFO(r.first_failure);
        CHECK(r.failures == 0);
    }
    TransitionConfig pe = live_config(TransitionKind::kViTCA);
    pe.positional_encoding = true;
    ViTCATransition t(pe);
    CHECK(lnca::testing::check_locality(t, 10, 8).failures == 0);
}

TEST_CASE("single-filter gate matches a hand-computed Hadamard product") {
    // x has a one-hot in channel 0 at (1,1) and arbitrary channel 1; C sums
    // channel 0 over the neighbourhood, so C(x) = 1 on the Moore block of (1,1).
    Tensor x(Shape{1, 4, 4, 2});
    for (std::int64_t r = 0; r < 16; ++r) x[r * 2 + 1] = static_cast<real>(r + 1);
    x.at(0, 1, 1, 0) = 1;
    Tensor k(Shape{3, 3, 2, 1});
    for (int i = 0; i < 9; ++i) k[i * 2] = 1;
    const Var xv(x);
    const Tensor out = scale_cells(xv, conv2d(xv, Var(k), Var(), 1, Padding::kZero)).value();
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
            const bool on = y <= 2 && xx <= 2;
            for (int c = 0; c < 2; ++c) CHECK(out.at(0, y, xx, c) == (on ? x.at(0, y, xx, c) : 0));
        }
}

TEST_CASE("replay pool bootstrap, bounded eviction and bookkeeping") {
    ReplayPool pool(8, 1);
    CHECK_THROWS_AS(pool.sample(2, 0), std::logic_error);
    std::vector<PoolEntry> batch(4);
    for (int i = 0; i < 4; ++i) batch[static_cast<std::size_t>(i)].target_id = i;
    CHECK(pool.store(batch).size() == 4);
    CHECK(pool.store(batch).size() == 4);
    CHECK(pool.size() == 8);
    const auto slots = pool.store(batch);
    CHECK(slots.size() == 4);
    CHECK(std::set<std::size_t>(slots.begin(), slots.end()).size() == 4);
    CHECK(pool.size() == 8);
    const auto s = pool.sample(5, 3);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 5);

    const auto r = lnca::testing::check_pool(64, 2000, 8, 5);
    CHECK(r.capacity_ok);
    CHECK(r.association_ok);
}
