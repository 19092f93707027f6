#include <doctest.h>

#include "lnca/autoencoder.hpp"
#include "support/gradcheck.hpp"

using namespace lnca;
using lnca::testing::random_tensor;

namespace {

bool same(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// Hand count for the default architecture (F=32, skip 16, latent 16, RGB).
std::int64_t conv_params(int k, std::int64_t cin, std::int64_t cout, bool bias) {
    return k * k * cin * cout + (bias ? cout : 0);
}
std::int64_t block_params(std::int64_t cin, std::int64_t cout) { return conv_params(3, cin, cout, false) + 2 * cout; }

}  // namespace

TEST_CASE("golden parameter counts for the default config") {
    const Autoencoder ae;
    const std::int64_t enc = block_params(3, 32) + conv_params(1, 32, 16, true) + block_params(32, 64) +
                             block_params(64, 128) + conv_params(3, 128, 16, true);
    const std::int64_t dec =
        block_params(16, 128) + block_params(128, 64) + block_params(64, 16) + conv_params(3, 16, 3, true);
    CHECK(enc == 112448);
    CHECK(dec == 102227);
    CHECK(ae.encoder_parameter_count() == enc);
    CHECK(ae.decoder_parameter_count() == dec);
    CHECK(ae.parameter_count() == 214675);
}

TEST_CASE("encode/decode shape contract and value ranges") {
    Autoencoder ae;
    Rng rng(1);
    Var x(random_tensor({8, 32, 32, 3}, rng, 0, 1));
    const EncodeOutput e = ae.encode(x);
    CHECK(e.latent.shape() == Shape{8, 8, 8, 16});
    CHECK(e.skip.shape() == Shape{8, 32, 32, 16});
    // 16x fewer cells in latent space.
    CHECK(dims4(e.latent.value(), "latent").cells() * 16 == dims4(x.value(), "input").cells());
    for (real v : e.latent.value().data()) {
        CHECK(v >= 0);
        CHECK(v <= 1);
    }
    const Var y = ae.decode(e.latent, e.skip);
    CHECK(y.shape() == x.shape());
    for (real v : y.value().data()) {
        CHECK(v > 0);
        CHECK(v < 1);
    }
    CHECK_THROWS_AS(ae.encode(Var(Tensor({1, 16, 16, 3}))), std::invalid_argument);
    CHECK_THROWS_AS(ae.decode(e.skip, e.skip), std::invalid_argument);
    CHECK_THROWS_AS(Autoencoder(AEConfig{30, 32}), std::invalid_argument);
}

TEST_CASE("eval mode is deterministic and bypass equals encode+decode") {
    Autoencoder ae;
    Rng rng(2);
    Var x(random_tensor({4, 32, 32, 3}, rng, 0, 1));
    ae.forward_bypass(x);  // populate running statistics
    ae.set_mode(Mode::kEval);
    const Tensor a = ae.forward_bypass(x).value();
    const Tensor b = ae.forward_bypass(x).value();
    CHECK(same(a, b));
    const EncodeOutput e = ae.encode(x);
    CHECK(same(ae.decode(e.latent, e.skip).value(), a));
    const EncodeOutput e2 = ae.encode(x);
    CHECK(same(e.latent.value(), e2.latent.value()));
}

TEST_CASE("every AE parameter receives a gradient") {
    AEConfig cfg;
    cfg.base_filters = 8;
    Autoencoder ae(cfg);
    Rng rng(3);
    Var x(random_tensor({2, 32, 32, 3}, rng, 0, 1));
    Var target(random_tensor({2, 32, 32, 3}, rng, 0, 1));
    Tape tape;
    tape.backward(mse(ae.forward_bypass(x), target));
    for (const auto& p : ae.parameters()) {
        INFO(p.name);
        REQUIRE(p.var.has_grad());
        double mag = 0;
        for (real g : p.var.grad().data()) mag += std::abs(g);
        CHECK(mag > 0);
    }
}

TEST_CASE("frozen AE records no parameter gradients") {
    AEConfig cfg;
    cfg.base_filters = 8;
    Autoencoder ae(cfg);
    ae.set_trainable(false);
    Rng rng(4);
    Var x(random_tensor({2, 32, 32, 3}, rng, 0, 1), true);
    Tape tape;
    tape.backward(mean_all(ae.forward_bypass(x)));
    for (const auto& p : ae.parameters()) CHECK_FALSE(p.var.has_grad());
    CHECK(x.has_grad());
}
