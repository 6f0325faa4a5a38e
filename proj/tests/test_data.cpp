#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "muap/dataset.hpp"
#include "muap/errors.hpp"
#include "muap/image.hpp"
#include "muap/perturbation.hpp"
#include "muap/rng.hpp"
#include "oracles.hpp"

using namespace muap;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path dir = fs::temp_directory_path() / (std::string("muap_test_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("apply_perturbation clamps, passes zero through, and subtracts") {
    Image q = Image::zeros(1, 1, 3);
    q.pixels = {250.0f, 100.0f, 0.0f};
    Perturbation u = Perturbation::zeros(1, 1, 3, NormOrder::linf, 20.0f);
    u.values.pixels = {10.0f, -10.0f, 0.0f};

    Image clamped = apply_perturbation(q, u, true);
    CHECK(clamped.pixels[0] == 255.0f);
    CHECK(clamped.pixels[1] == 90.0f);

    Image open = apply_perturbation(q, u, false);
    CHECK(open.pixels[0] == 260.0f);
    CHECK(open.pixels[1] == 90.0f);

    Perturbation zero = Perturbation::zeros(1, 1, 3, NormOrder::linf, 0.0f);
    Image same = apply_perturbation(q, zero, true);
    CHECK(same.pixels == q.pixels);

    Image bad = Image::zeros(1, 2, 3);
    CHECK_THROWS_AS(apply_perturbation(bad, u, true), std::invalid_argument);
}

TEST_CASE("apply_perturbation without clamp is linear") {
    Rng rng(11);
    Image q = testing::random_image(rng, 3, 4, 4);
    Perturbation u1 = Perturbation::zeros(3, 4, 4, NormOrder::linf, 100.0f);
    Perturbation u2 = u1;
    for (float& p : u1.values.pixels) p = static_cast<float>(rng.uniform(-20.0, 20.0));
    for (float& p : u2.values.pixels) p = static_cast<float>(rng.uniform(-20.0, 20.0));

    const float a = 2.0f, b = -0.5f;
    Perturbation combo = u1;
    for (std::size_t i = 0; i < combo.values.pixels.size(); ++i) {
        combo.values.pixels[i] = a * u1.values.pixels[i] + b * u2.values.pixels[i];
    }
    Image got = apply_perturbation(q, combo, false);
    for (std::size_t i = 0; i < q.pixels.size(); ++i) {
        float want = q.pixels[i] + (a * u1.values.pixels[i] + b * u2.values.pixels[i]);
        CHECK(got.pixels[i] == want);
    }
}

TEST_CASE("synthetic generator split arithmetic and determinism") {
    SyntheticSpec spec;
    spec.seed = 7;
    spec.n_train_ids = 2;
    spec.n_test_ids = 4;
    spec.views_per_id = 3;
    spec.height = 8;
    spec.width = 4;

    Dataset ds = generate_synthetic(spec);
    int queries = 0, gallery = 0, train = 0;
    for (const DatasetItem& it : ds) {
        if (it.split == Split::query) ++queries;
        if (it.split == Split::gallery) ++gallery;
        if (it.split == Split::train) ++train;
    }
    CHECK(queries == 4);
    CHECK(gallery == 8);
    CHECK(train == 6);

    Dataset again = generate_synthetic(spec);
    REQUIRE(again.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(again[i].image.pixels == ds[i].image.pixels);
        CHECK(again[i].image_id == ds[i].image_id);
    }
}

TEST_CASE("synthetic generator degenerate case and preconditions") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    spec.jitter = 0.0;
    spec.shift_max = 0;
    spec.n_train_ids = 2;
    spec.n_test_ids = 2;
    spec.views_per_id = 3;
    spec.height = 8;
    spec.width = 4;
    Dataset ds = generate_synthetic(spec);
    // all views of one identity identical
    CHECK(ds[0].image.pixels == ds[1].image.pixels);
    CHECK(ds[1].image.pixels == ds[2].image.pixels);

    SyntheticSpec bad = spec;
    bad.views_per_id = 1;
    CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
    bad = spec;
    bad.height = 0;
    CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
    bad = spec;
    bad.n_train_ids = 1;
    CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
}

TEST_CASE("train and test identities are disjoint, every query has a positive") {
    Dataset ds = generate_synthetic(SyntheticSpec{});
    std::set<int> train_ids, test_ids;
    for (const DatasetItem& it : ds) {
        (it.split == Split::train ? train_ids : test_ids).insert(it.identity);
    }
    for (int id : train_ids) CHECK(test_ids.count(id) == 0);

    RetrievalSets sets = split_query_gallery(ds);
    for (const DatasetItem* q : sets.queries) {
        bool has_pos = false;
        for (const DatasetItem* g : sets.gallery) has_pos |= (g->identity == q->identity);
        CHECK(has_pos);
    }
    for (const DatasetItem& it : ds) {
        for (float v : it.image.pixels) {
            CHECK(v >= 0.0f);
            CHECK(v <= 255.0f);
        }
    }
}

TEST_CASE("uap file round-trip is bit-exact") {
    fs::path dir = temp_dir("uap");
    Rng rng(3);
    Perturbation u = Perturbation::zeros(3, 5, 2, NormOrder::l2, 7.5f);
    for (float& p : u.values.pixels) p = static_cast<float>(rng.normal(0.0, 3.0));

    std::string path = (dir / "u.uap").string();
    save_uap(u, path);
    Perturbation v = load_uap(path);
    CHECK(v.gamma == u.gamma);
    CHECK(v.epsilon == u.epsilon);
    CHECK(v.values.channels == 3);
    CHECK(v.values.height == 5);
    CHECK(v.values.width == 2);
    CHECK(v.values.pixels == u.values.pixels);
}

TEST_CASE("uap loader distinguishes bad magic, truncation and version") {
    fs::path dir = temp_dir("uap_err");
    Perturbation u = Perturbation::zeros(3, 4, 4, NormOrder::linf, 10.0f);
    std::string good = (dir / "good.uap").string();
    save_uap(u, good);

    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream out(dir / "magic.uap", std::ios::binary);
        out << bad;
        out.close();
        try {
            load_uap((dir / "magic.uap").string());
            FAIL("expected bad magic");
        } catch (const FormatError& e) {
            CHECK(e.issue() == FormatIssue::bad_magic);
        }
    }
    {
        // header says 3x4x4 but only 40 floats follow
        std::string bad = bytes.substr(0, bytes.size() - (48 - 40) * 4);
        std::ofstream out(dir / "trunc.uap", std::ios::binary);
        out << bad;
        out.close();
        try {
            load_uap((dir / "trunc.uap").string());
            FAIL("expected truncation");
        } catch (const FormatError& e) {
            CHECK(e.issue() == FormatIssue::truncated);
        }
    }
    {
        std::string bad = bytes;
        bad[4] = 9;  // version low byte
        std::ofstream out(dir / "ver.uap", std::ios::binary);
        out << bad;
        out.close();
        try {
            load_uap((dir / "ver.uap").string());
            FAIL("expected version mismatch");
        } catch (const FormatError& e) {
            CHECK(e.issue() == FormatIssue::version_mismatch);
        }
    }
}

TEST_CASE("ppm round-trip, rounding rule and payload size") {
    fs::path dir = temp_dir("ppm");

    Image zero = Image::zeros(3, 2, 2);
    std::string zpath = (dir / "zero.ppm").string();
    save_image_ppm(zero, zpath);
    Image zloaded = load_image_ppm(zpath);
    CHECK(zloaded.pixels == zero.pixels);

    // header "P6\n2 2\n255\n" = 11 bytes, payload 12 bytes
    CHECK(fs::file_size(zpath) == 11 + 12);

    Image img = Image::zeros(3, 2, 2);
    img.pixels.assign(12, 127.5f);
    std::string path = (dir / "half.ppm").string();
    save_image_ppm(img, path);
    Image loaded = load_image_ppm(path);
    for (float v : loaded.pixels) CHECK(v == 128.0f);

    Image out_of_range = Image::zeros(3, 2, 2);
    out_of_range.pixels[0] = -1.0f;
    CHECK_THROWS_AS(save_image_ppm(out_of_range, (dir / "bad.ppm").string()),
                    std::invalid_argument);
}

TEST_CASE("ppm loader rejects bad headers and short payloads") {
    fs::path dir = temp_dir("ppm_err");
    {
        std::ofstream out(dir / "p5.ppm", std::ios::binary);
        out << "P5\n2 2\n255\n";
    }
    try {
        load_image_ppm((dir / "p5.ppm").string());
        FAIL("expected bad header");
    } catch (const FormatError& e) {
        CHECK(e.issue() == FormatIssue::bad_header);
    }
    {
        std::ofstream out(dir / "short.ppm", std::ios::binary);
        out << "P6\n2 2\n255\n";
        out << "abc";  // 3 of 12 payload bytes
    }
    try {
        load_image_ppm((dir / "short.ppm").string());
        FAIL("expected truncation");
    } catch (const FormatError& e) {
        CHECK(e.issue() == FormatIssue::truncated);
    }
}

TEST_CASE("dataset manifest round-trip preserves ids, splits and bytes") {
    SyntheticSpec spec;
    spec.n_train_ids = 2;
    spec.n_test_ids = 2;
    spec.views_per_id = 2;
    spec.height = 8;
    spec.width = 4;
    Dataset ds = generate_synthetic(spec);

    fs::path dir = temp_dir("manifest");
    save_dataset(ds, dir.string());
    Dataset loaded = load_dataset((dir / "manifest.csv").string());
    REQUIRE(loaded.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(loaded[i].image_id == ds[i].image_id);
        CHECK(loaded[i].identity == ds[i].identity);
        CHECK(loaded[i].split == ds[i].split);
        // PPM quantizes to whole bytes
        for (std::size_t p = 0; p < ds[i].image.pixels.size(); ++p) {
            CHECK(std::fabs(loaded[i].image.pixels[p] - ds[i].image.pixels[p]) <= 0.5f);
        }
    }
}
