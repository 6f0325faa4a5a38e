#include <doctest.h>

#include <cmath>

#include "muap/regularizer.hpp"
#include "muap/rng.hpp"
#include "oracles.hpp"

using namespace muap;

TEST_CASE("mi_loss on frozen stencils") {
    Image constant = Image::zeros(3, 4, 4);
    for (float& p : constant.pixels) p = 42.0f;
    CHECK(mi_loss(constant, MiConfig{1.0, 1.0}) == 0.0);

    // single channel 1x2 [0, 10]
    Image pair = Image::zeros(1, 1, 2);
    pair.pixels = {0.0f, 10.0f};
    CHECK(mi_loss(pair, MiConfig{1.0, 0.0}) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(mi_loss(pair, MiConfig{0.0, 1.0}) == doctest::Approx(100.0).epsilon(1e-12));

    // 2x2 checkerboard [0,10;10,0]: dx 100+100, dy 100+100
    Image checker = Image::zeros(1, 2, 2);
    checker.pixels = {0.0f, 10.0f, 10.0f, 0.0f};
    CHECK(mi_loss(checker, MiConfig{0.0, 1.0}) == doctest::Approx(400.0).epsilon(1e-12));
}

TEST_CASE("mi_loss is zero iff constant per channel, and shift invariant") {
    Rng rng(8);
    Image img = testing::random_image(rng, 3, 5, 4);
    CHECK(mi_loss(img, MiConfig{1.0, 1.0}) > 0.0);

    Image shifted = img;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) shifted.at(c, y, x) += 7.5f * (c + 1);
        }
    }
    // shifted pixels are float32, so differences move by ulp-scale amounts
    CHECK(mi_loss(shifted, MiConfig{0.0, 1.0}) ==
          doctest::Approx(mi_loss(img, MiConfig{0.0, 1.0})).epsilon(1e-6));
    CHECK(mi_loss(shifted, MiConfig{1.0, 0.0}) ==
          doctest::Approx(mi_loss(img, MiConfig{1.0, 0.0})).epsilon(1e-6));
}

TEST_CASE("mi_loss scaling: l1 part scales with |c|, l2 part with c^2") {
    Rng rng(9);
    Image img = testing::random_image(rng, 2, 4, 4, -20.0, 20.0);
    double l1 = mi_loss(img, MiConfig{1.0, 0.0});
    double l2 = mi_loss(img, MiConfig{0.0, 1.0});

    Image scaled = img;
    const float c = -2.5f;
    for (float& p : scaled.pixels) p *= c;
    CHECK(mi_loss(scaled, MiConfig{1.0, 0.0}) == doctest::Approx(std::fabs(c) * l1).epsilon(1e-6));
    CHECK(mi_loss(scaled, MiConfig{0.0, 1.0}) == doctest::Approx(c * c * l2).epsilon(1e-6));
}

TEST_CASE("mi_grad vanishes on constants and matches finite differences") {
    Image constant = Image::zeros(3, 4, 4);
    for (float& p : constant.pixels) p = 13.0f;
    Grad g0 = mi_grad(constant, MiConfig{1.0, 1.0});
    for (double v : g0) CHECK(v == 0.0);

    Rng rng(10);
    Image img = testing::random_image(rng, 3, 6, 5);

    MiConfig l2{0.0, 1.0};
    Grad g2 = mi_grad(img, l2);
    double err2 = testing::max_grad_rel_err(
        [&](const Image& im) { return mi_loss(im, l2); }, img, g2, rng, 20);
    CHECK(err2 < 1e-4);

    MiConfig l1{1.0, 0.0};
    Grad g1 = mi_grad(img, l1);
    double err1 = testing::max_grad_rel_err(
        [&](const Image& im) { return mi_loss(im, l1); }, img, g1, rng, 20);
    CHECK(err1 < 1e-3);
}

TEST_CASE("directional derivative test for the l2 form") {
    Rng rng(12);
    Image img = testing::random_image(rng, 3, 5, 5);
    MiConfig l2{0.0, 1.0};
    Grad g = mi_grad(img, l2);

    for (int trial = 0; trial < 5; ++trial) {
        Image v = testing::random_image(rng, 3, 5, 5, -1.0, 1.0);
        const double h = 1e-3;
        Image plus = img, minus = img;
        for (std::size_t i = 0; i < g.size(); ++i) {
            plus.pixels[i] = static_cast<float>(img.pixels[i] + h * v.pixels[i]);
            minus.pixels[i] = static_cast<float>(img.pixels[i] - h * v.pixels[i]);
        }
        // dot the gradient with the direction the f32 probe actually realized;
        // the loss is quadratic, so the central difference is then exact
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            dot += g[i] * (static_cast<double>(plus.pixels[i]) - minus.pixels[i]) / 2.0;
        }
        double fd = (mi_loss(plus, l2) - mi_loss(minus, l2)) / 2.0;
        CHECK(testing::rel_err(dot, fd) < 1e-4);
    }
}

TEST_CASE("gradient_energy is the unit-weight l2 form") {
    Image constant = Image::zeros(3, 3, 3);
    CHECK(gradient_energy(constant) == 0.0);

    Rng rng(13);
    Image img = testing::random_image(rng, 3, 4, 4);
    CHECK(gradient_energy(img) == mi_loss(img, MiConfig{0.0, 1.0}));
}
