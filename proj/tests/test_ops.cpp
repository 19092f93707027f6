#include <doctest.h>

#include <cmath>

#include "lnca/autodiff.hpp"
#include "lnca/ops.hpp"
#include "lnca/rng.hpp"
#include "support/gradcheck.hpp"

using namespace lnca;
using lnca::testing::random_tensor;

TEST_CASE("conv2d identity and overlap counting") {
    Var x(Tensor({1, 1, 1, 1}, {5}));
    Var k(Tensor({1, 1, 1, 1}, {1}));
    CHECK(conv2d(x, k, Var(), 1, Padding::kZero).value()[0] == doctest::Approx(5.0));

    Var ones(Tensor({1, 3, 3, 1}, real(1)));
    Var k3(Tensor({3, 3, 1, 1}, real(1)));
    const Tensor y = conv2d(ones, k3, Var(), 1, Padding::kZero).value();
    REQUIRE(y.shape() == Shape{1, 3, 3, 1});
    CHECK(y.at(0, 1, 1, 0) == 9);
    CHECK(y.at(0, 0, 0, 0) == 4);
    CHECK(y.at(0, 2, 2, 0) == 4);
    CHECK(y.at(0, 0, 1, 0) == 6);
}

TEST_CASE("conv2d output extent and errors") {
    Var x(Tensor({2, 7, 5, 3}));
    Var k(Tensor({3, 3, 3, 4}));
    CHECK(conv2d(x, k, Var(), 2, Padding::kZero).shape() == Shape{2, 4, 3, 4});
    CHECK(conv2d(x, k, Var(), 1, Padding::kNone).shape() == Shape{2, 5, 3, 4});
    CHECK_THROWS_AS(conv2d(x, k, Var(), 0, Padding::kZero), std::invalid_argument);
    Var bad(Tensor({3, 3, 2, 4}));
    CHECK_THROWS_AS(conv2d(x, bad, Var(), 1, Padding::kZero), std::invalid_argument);
    Var five(Tensor({5, 5, 3, 4}));
    CHECK_THROWS_AS(conv2d(x, five, Var(), 1, Padding::kZero), std::invalid_argument);
}

TEST_CASE("conv_transpose2d scalar case and shape contract") {
    Var x(Tensor({1, 1, 1, 1}, {3}));
    Var k(Tensor({1, 1, 1, 1}, {2}));
    CHECK(conv_transpose2d(x, k, Var(), 1).value()[0] == doctest::Approx(6.0));

    Var y(Tensor({1, 4, 4, 1}, real(1)));
    Var k3(Tensor({3, 3, 1, 1}, real(1)));
    CHECK(conv_transpose2d(y, k3, Var(), 2).shape() == Shape{1, 8, 8, 1});
    CHECK_THROWS_AS(conv_transpose2d(y, k3, Var(), 3), std::invalid_argument);

    // conv(stride 2) followed by its transpose restores the spatial extent.
    Var img(Tensor({2, 8, 6, 3}, real(0.5)));
    Var down(Tensor({3, 3, 3, 5}, real(0.1)));
    Var up(Tensor({3, 3, 3, 5}, real(0.1)));
    const Var z = conv_transpose2d(conv2d(img, down, Var(), 2, Padding::kZero), up, Var(), 2);
    CHECK(z.shape() == img.shape());
}

TEST_CASE("layer norm of constant channels collapses to the shift") {
    Var x(Tensor({1, 1, 2, 4}, real(3)));
    Var g(Tensor({4}, real(2)));
    Var b(Tensor({4}, {0.5, -1, 0, 7}));
    const Tensor y = layer_norm(x, g, b).value();
    for (int c = 0; c < 4; ++c) {
        CHECK(y.at(0, 0, 0, c) == doctest::Approx(b.value()[c]));
        CHECK(y.at(0, 0, 1, c) == doctest::Approx(b.value()[c]));
    }
}

TEST_CASE("batch norm train output has zero channel mean") {
    Rng rng(3);
    Var x(random_tensor({4, 3, 3, 5}, rng, 2, 6));
    Var g(Tensor({5}, real(1)));
    Var b(Tensor({5}, real(0)));
    BatchNormStats stats;
    CHECK_THROWS_AS(batch_norm(x, g, b, stats, Mode::kEval), std::logic_error);
    const Tensor y = batch_norm(x, g, b, stats, Mode::kTrain).value();
    for (int c = 0; c < 5; ++c) {
        double m = 0;
        for (std::int64_t r = 0; r < 36; ++r) m += y[r * 5 + c];
        CHECK(std::abs(m / 36) < 1e-5);
    }
    CHECK(stats.initialized);
    // Eval mode now works and is deterministic.
    const Tensor e1 = batch_norm(x, g, b, stats, Mode::kEval).value();
    const Tensor e2 = batch_norm(x, g, b, stats, Mode::kEval).value();
    CHECK(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
}

TEST_CASE("activation origin values and swish(1)") {
    Var z(Tensor({1}, {0}));
    CHECK(activation(z, Activation::kSwish).value()[0] == 0);
    CHECK(activation(z, Activation::kSigmoid).value()[0] == doctest::Approx(0.5));
    CHECK(activation(z, Activation::kGelu).value()[0] == 0);
    Var one(Tensor({1}, {1}));
    CHECK(activation(one, Activation::kSwish).value()[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    Var wide(Tensor({3}, {-30, 0.3, 30}));
    const Tensor sig = activation(wide, Activation::kSigmoid).value();
    for (real v : sig.data()) {
        CHECK(v >= 0);
        CHECK(v <= 1);
    }
}

TEST_CASE("attention_local: uniform weights for equal scores") {
    Rng rng(1);
    Tensor qv(Shape{1, 4, 4, 8}, real(0.3));
    Var q(qv), k(qv);
    Var v(random_tensor({1, 4, 4, 8}, rng));
    const Tensor out = attention_local(q, k, v, 2).value();
    // Interior cell (1,1): plain average of its 9 neighbours.
    for (int c = 0; c < 8; ++c) {
        double avg = 0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) avg += v.value().at(0, 1 + dy, 1 + dx, c);
        CHECK(out.at(0, 1, 1, c) == doctest::Approx(avg / 9).epsilon(1e-5));
    }
    // Corner (0,0) averages its 4 in-lattice neighbours only.
    for (int c = 0; c < 8; ++c) {
        double avg = 0;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) avg += v.value().at(0, dy, dx, c);
        CHECK(out.at(0, 0, 0, c) == doctest::Approx(avg / 4).epsilon(1e-5));
    }
}

TEST_CASE("attention_local: saturated softmax picks one neighbour") {
    Rng rng(2);
    Tensor qv(Shape{1, 3, 3, 4}, real(1));
    Tensor kv(Shape{1, 3, 3, 4}, real(0));
    for (int c = 0; c < 4; ++c) kv.at(0, 2, 1, c) = 50;  // neighbour below the centre
    Var v(random_tensor({1, 3, 3, 4}, rng));
    const Tensor out = attention_local(Var(qv), Var(kv), v, 1).value();
    for (int c = 0; c < 4; ++c) CHECK(std::abs(out.at(0, 1, 1, c) - v.value().at(0, 2, 1, c)) < 1e-4);
    CHECK_THROWS_AS(attention_local(Var(qv), Var(kv), v, 3), std::invalid_argument);
}

TEST_CASE("pointwise suite examples") {
    Rng rng(5);
    Var x(random_tensor({2, 3, 3, 4}, rng));
    CHECK(mse(x, x).value()[0] == 0);
    CHECK(mse(Var(Tensor({2}, {0, 0})), Var(Tensor({2}, {1, 1}))).value()[0] == doctest::Approx(1.0));
    CHECK(l1_clip_norm(x, -1, 1).value()[0] == 0);
    CHECK(l1_clip_norm(Var(Tensor({4}, {0, 1.5, -0.5, 0.5})), 0, 1).value()[0] == doctest::Approx(0.25));

    auto [a, b] = split_channels(x);
    CHECK(a.shape() == Shape{2, 3, 3, 2});
    const Var joined = concat_channels(std::vector<Var>{a, b});
    CHECK(std::equal(joined.value().data().begin(), joined.value().data().end(), x.value().data().begin()));
    CHECK_THROWS_AS(split_channels(Var(Tensor({1, 1, 1, 3}))), std::invalid_argument);
    CHECK_THROWS_AS(mse(x, a), std::invalid_argument);

    const Var sg = simple_gate(Var(Tensor({1, 1, 1, 2}, {2, 3})));
    CHECK(sg.value()[0] == 6);

    CHECK(dropout(x, real(0.9), Mode::kEval, 1).node() == x.node());
    const Tensor d1 = dropout(x, real(0.5), Mode::kTrain, 11).value();
    const Tensor d2 = dropout(x, real(0.5), Mode::kTrain, 11).value();
    CHECK(std::equal(d1.data().begin(), d1.data().end(), d2.data().begin()));
}

TEST_CASE("non-finite forward values are rejected") {
    Var x(Tensor({2}, {1, std::numeric_limits<real>::infinity()}));
    CHECK_THROWS_AS(add(x, x), std::domain_error);
}

TEST_CASE("tape replays in reverse order and tracks peak bytes") {
    Rng rng(9);
    auto run = [&] {
        Var x(random_tensor({2, 6, 6, 3}, rng), true);
        Var k(Tensor({3, 3, 3, 4}, real(0.1)), true);
        Tape tape;
        Var y = activation(conv2d(x, k, Var(), 1, Padding::kZero), Activation::kSwish);
        Var l = mean_all(y);
        CHECK(tape.size() == 3);
        const auto before = tape.peak_bytes();
        tape.backward(l);
        CHECK(tape.peak_bytes() >= before);
        CHECK(tape.size() == 0);
        CHECK(x.has_grad());
        CHECK(k.has_grad());
        return tape.peak_bytes();
    };
    const auto p1 = run();
    const auto p2 = run();
    CHECK(p1 == p2);
}

TEST_CASE("no recording without a tape or trainable inputs") {
    Var x(Tensor({1, 2, 2, 2}, real(1)));
    Var k(Tensor({1, 1, 2, 2}, real(1)), true);
    {
        Var y = conv2d(x, k, Var(), 1, Padding::kZero);
        CHECK_FALSE(y.requires_grad());
    }
    Tape tape;
    {
        NoGradGuard guard;
        Var y = conv2d(x, k, Var(), 1, Padding::kZero);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(tape.size() == 0);
    Var y = conv2d(x, Var(k.value()), Var(), 1, Padding::kZero);
    CHECK(tape.size() == 0);
}

TEST_CASE("byte budget is enforced") {
    ScopedByteBudget budget(MemoryTracker::live() + 1024);
    CHECK_THROWS_AS(Tensor(Shape{1024}), ByteBudgetExceeded);
    CHECK_NOTHROW(Tensor(Shape{16}));
}
