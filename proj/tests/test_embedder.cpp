#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "muap/embedder.hpp"
#include "muap/errors.hpp"
#include "muap/metrics.hpp"
#include "muap/rng.hpp"
#include "oracles.hpp"

using namespace muap;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.seed = 3;
    spec.n_train_ids = 4;
    spec.n_test_ids = 2;
    spec.views_per_id = 4;
    spec.height = 8;
    spec.width = 8;
    return spec;
}

TrainedModel untrained(Arch arch, const Dataset& ds) {
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.embed_dim = 8;
    cfg.hidden = 12;
    cfg.conv_c1 = 4;
    cfg.conv_c2 = 6;
    return train_embedder(arch, ds, cfg);
}

const std::vector<Arch> kAllArchs = {Arch::linear, Arch::mlp, Arch::conv, Arch::pool_mlp};

}  // namespace

TEST_CASE("forward returns unit embeddings for every architecture") {
    Dataset ds = generate_synthetic(small_spec());
    for (Arch arch : kAllArchs) {
        CAPTURE(arch_name(arch));
        TrainedModel tm = untrained(arch, ds);
        for (int i = 0; i < 6; ++i) {
            std::vector<double> f = forward(tm.embedder, ds[i].image);
            double n = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0));
            CHECK(std::fabs(n - 1.0) < 1e-5);
        }
        // determinism: identical inputs embed identically
        CHECK(forward(tm.embedder, ds[0].image) == forward(tm.embedder, ds[0].image));
    }
}

TEST_CASE("linear embedder matches hand-computed projection then normalization") {
    Dataset ds = generate_synthetic(small_spec());
    TrainedModel tm = untrained(Arch::linear, ds);
    const Embedder& m = tm.embedder;
    const LayerDesc& L = m.layers[0];

    const Image& x = ds[0].image;
    std::vector<double> y(m.embed_dim, 0.0);
    for (int o = 0; o < m.embed_dim; ++o) {
        double acc = m.params[L.b_off + o];
        for (std::size_t i = 0; i < x.pixels.size(); ++i) {
            acc += static_cast<double>(m.params[L.w_off + o * x.pixels.size() + i]) *
                   (static_cast<double>(x.pixels[i]) / 255.0);
        }
        y[o] = acc;
    }
    double n = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    std::vector<double> f = forward(m, x);
    for (int o = 0; o < m.embed_dim; ++o) {
        CHECK(f[o] == doctest::Approx(y[o] / n).epsilon(1e-12));
    }
}

TEST_CASE("backward_input edge cases") {
    Dataset ds = generate_synthetic(small_spec());
    TrainedModel tm = untrained(Arch::mlp, ds);

    std::vector<double> zero(tm.embedder.embed_dim, 0.0);
    Grad g = backward_input(tm.embedder, ds[0].image, zero);
    for (double v : g) CHECK(v == 0.0);

    std::vector<double> wrong(tm.embedder.embed_dim + 1, 0.0);
    CHECK_THROWS_AS(backward_input(tm.embedder, ds[0].image, wrong), std::invalid_argument);

    Image bad = Image::zeros(3, 4, 4);
    CHECK_THROWS_AS(forward(tm.embedder, bad), std::invalid_argument);
}

TEST_CASE("backward_input matches central finite differences on all architectures") {
    Dataset ds = generate_synthetic(small_spec());
    Rng rng(77);
    for (Arch arch : kAllArchs) {
        CAPTURE(arch_name(arch));
        TrainedModel tm = untrained(arch, ds);
        const Embedder& m = tm.embedder;

        std::vector<double> grad_out(m.embed_dim);
        for (double& v : grad_out) v = rng.uniform(-1.0, 1.0);

        const Image& x = ds[1].image;
        Grad analytic = backward_input(m, x, grad_out);
        auto f = [&](const Image& img) {
            std::vector<double> e = forward(m, img);
            return std::inner_product(e.begin(), e.end(), grad_out.begin(), 0.0);
        };
        double err = testing::max_grad_rel_err(f, x, analytic, rng, 20);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("grad_out orthogonal to the embedding gives the closed-form linear gradient") {
    Dataset ds = generate_synthetic(small_spec());
    TrainedModel tm = untrained(Arch::linear, ds);
    const Embedder& m = tm.embedder;
    const LayerDesc& L = m.layers[0];
    const Image& x = ds[2].image;

    std::vector<double> f = forward(m, x);
    std::vector<double> y = raw_feature(m, x);
    double norm_y = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));

    // orthogonalize a random vector against f
    Rng rng(9);
    std::vector<double> g(m.embed_dim);
    for (double& v : g) v = rng.uniform(-1.0, 1.0);
    double dot = std::inner_product(g.begin(), g.end(), f.begin(), 0.0);
    for (int i = 0; i < m.embed_dim; ++i) g[i] -= dot * f[i];

    Grad got = backward_input(m, x, g);
    // expected: W^T (g / ||y||) / 255, the input scaling included
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        double acc = 0.0;
        for (int o = 0; o < m.embed_dim; ++o) {
            acc += static_cast<double>(m.params[L.w_off + o * x.pixels.size() + i]) * g[o];
        }
        double want = acc / norm_y / 255.0;
        CHECK(got[i] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("classify is the head transpose applied to the raw feature") {
    Dataset ds = generate_synthetic(small_spec());
    TrainedModel tm = untrained(Arch::linear, ds);
    const Embedder& m = tm.embedder;

    ClassifierHead zero_head;
    zero_head.embed_dim = m.embed_dim;
    zero_head.n_classes = 4;
    zero_head.weight.assign(static_cast<std::size_t>(m.embed_dim) * 4, 0.0f);
    std::vector<double> logits = classify(m, zero_head, ds[0].image);
    for (double v : logits) CHECK(v == 0.0);

    // one-hot column c picks raw feature coordinate c
    ClassifierHead onehot = zero_head;
    for (int c = 0; c < 4; ++c) onehot.weight[static_cast<std::size_t>(c) * 4 + c] = 1.0f;
    std::vector<double> y = raw_feature(m, ds[0].image);
    std::vector<double> picked = classify(m, onehot, ds[0].image);
    for (int c = 0; c < 4; ++c) CHECK(picked[c] == doctest::Approx(y[c]).epsilon(1e-12));

    // permuting head columns permutes logits
    ClassifierHead perm = onehot;
    for (int d = 0; d < m.embed_dim; ++d) {
        std::swap(perm.weight[static_cast<std::size_t>(d) * 4 + 0],
                  perm.weight[static_cast<std::size_t>(d) * 4 + 3]);
    }
    std::vector<double> permuted = classify(m, perm, ds[0].image);
    CHECK(permuted[0] == picked[3]);
    CHECK(permuted[3] == picked[0]);

    ClassifierHead tiny = zero_head;
    tiny.n_classes = 1;
    CHECK_THROWS_AS(classify(m, tiny, ds[0].image), std::invalid_argument);
}

TEST_CASE("training is deterministic and reaches the accuracy bar") {
    Dataset ds = generate_synthetic(SyntheticSpec{});
    TrainConfig cfg;
    cfg.seed = 11;

    TrainedModel a = train_embedder(Arch::linear, ds, cfg);
    CHECK(a.train_accuracy >= 0.95);

    TrainedModel b = train_embedder(Arch::linear, ds, cfg);
    CHECK(a.embedder.params == b.embedder.params);
    CHECK(a.head.weight == b.head.weight);

    RetrievalSets sets = split_query_gallery(ds);
    double clean_map = mean_ap(a.embedder, sets.queries, sets.gallery);
    CHECK(clean_map >= 0.85);
}

TEST_CASE("training rejects single-identity data") {
    SyntheticSpec spec = small_spec();
    Dataset ds = generate_synthetic(spec);
    // keep only identity 0 in the train split
    Dataset filtered;
    for (const DatasetItem& it : ds) {
        if (it.split != Split::train || it.identity == 0) filtered.push_back(it);
    }
    CHECK_THROWS_AS(train_embedder(Arch::linear, filtered, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("model file round-trip is bit-exact") {
    Dataset ds = generate_synthetic(small_spec());
    for (Arch arch : kAllArchs) {
        CAPTURE(arch_name(arch));
        TrainedModel tm = untrained(arch, ds);
        fs::path path = fs::temp_directory_path() / ("muap_model_" + arch_name(arch) + ".model");
        save_model(tm.embedder, tm.head, path.string());
        LoadedModel lm = load_model(path.string());

        CHECK(lm.embedder.arch == tm.embedder.arch);
        CHECK(lm.embedder.embed_dim == tm.embedder.embed_dim);
        CHECK(lm.embedder.params == tm.embedder.params);
        CHECK(lm.head.weight == tm.head.weight);
        CHECK(lm.head.n_classes == tm.head.n_classes);
        CHECK(lm.head.class_identities == tm.head.class_identities);
        REQUIRE(lm.embedder.layers.size() == tm.embedder.layers.size());
        for (std::size_t i = 0; i < lm.embedder.layers.size(); ++i) {
            CHECK(lm.embedder.layers[i].kind == tm.embedder.layers[i].kind);
            CHECK(lm.embedder.layers[i].w_off == tm.embedder.layers[i].w_off);
            CHECK(lm.embedder.layers[i].w_len == tm.embedder.layers[i].w_len);
        }
        // behavioral equality
        CHECK(forward(lm.embedder, ds[0].image) == forward(tm.embedder, ds[0].image));
        fs::remove(path);
    }
}
