#include "muap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "muap/rng.hpp"

namespace fs = std::filesystem;

namespace muap {

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "query") return Split::query;
    if (s == "gallery") return Split::gallery;
    throw std::invalid_argument("unknown split '" + s + "'");
}

namespace {

constexpr int kBlockRows = 4;
constexpr int kBlockCols = 2;

// Identity colors live in a band around mid-gray. The band width sets the
// identity signal scale in pixel units; it is deliberately of the same
// order as the perturbation budgets under study so that norm-bounded
// attacks are meaningful against these images.
constexpr double kColorCenter = 128.0;
constexpr double kColorRange = 12.0;

// Bilinear upsample of a kBlockRows×kBlockCols color grid, sampling block
// centers.
Image upsample_blocks(const std::vector<double>& grid, int h, int w) {
    Image img = Image::zeros(3, h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            double gy = (y + 0.5) / h * kBlockRows - 0.5;
            gy = std::clamp(gy, 0.0, static_cast<double>(kBlockRows - 1));
            int y0 = static_cast<int>(gy);
            int y1 = std::min(y0 + 1, kBlockRows - 1);
            double fy = gy - y0;
            for (int x = 0; x < w; ++x) {
                double gx = (x + 0.5) / w * kBlockCols - 0.5;
                gx = std::clamp(gx, 0.0, static_cast<double>(kBlockCols - 1));
                int x0 = static_cast<int>(gx);
                int x1 = std::min(x0 + 1, kBlockCols - 1);
                double fx = gx - x0;
                auto g = [&](int by, int bx) {
                    return grid[(static_cast<std::size_t>(c) * kBlockRows + by) * kBlockCols + bx];
                };
                double v = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x1)) +
                           fy * ((1 - fx) * g(y1, x0) + fx * g(y1, x1));
                img.at(c, y, x) = static_cast<float>(v);
            }
        }
    }
    return img;
}

Image make_view(const Image& base, Rng& rng, const SyntheticSpec& spec) {
    double offset = spec.jitter > 0 ? rng.uniform(-spec.jitter, spec.jitter) : 0.0;
    int dy = spec.shift_max > 0 ? static_cast<int>(rng.uniform_int(-spec.shift_max, spec.shift_max)) : 0;
    int dx = spec.shift_max > 0 ? static_cast<int>(rng.uniform_int(-spec.shift_max, spec.shift_max)) : 0;

    Image view = Image::zeros(base.channels, base.height, base.width);
    for (int c = 0; c < base.channels; ++c) {
        for (int y = 0; y < base.height; ++y) {
            int sy = std::clamp(y - dy, 0, base.height - 1);
            for (int x = 0; x < base.width; ++x) {
                int sx = std::clamp(x - dx, 0, base.width - 1);
                double v = base.at(c, sy, sx) + offset;
                if (spec.noise_sigma > 0) v += rng.normal(0.0, spec.noise_sigma);
                view.at(c, y, x) = clamp_pixel(static_cast<float>(v));
            }
        }
    }
    return view;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_train_ids < 2 || spec.n_test_ids < 2) {
        throw std::invalid_argument("generate_synthetic: need at least 2 train and 2 test identities");
    }
    if (spec.views_per_id < 2) {
        throw std::invalid_argument("generate_synthetic: views_per_id must be >= 2");
    }
    if (spec.height <= 0 || spec.width <= 0) {
        throw std::invalid_argument("generate_synthetic: zero-sized dimensions");
    }

    Rng rng(spec.seed);
    Dataset ds;
    int total_ids = spec.n_train_ids + spec.n_test_ids;
    for (int id = 0; id < total_ids; ++id) {
        std::vector<double> grid(3 * kBlockRows * kBlockCols);
        for (double& g : grid) {
            g = rng.uniform(kColorCenter - kColorRange, kColorCenter + kColorRange);
        }
        Image base = upsample_blocks(grid, spec.height, spec.width);

        bool is_train = id < spec.n_train_ids;
        for (int v = 0; v < spec.views_per_id; ++v) {
            DatasetItem item;
            item.identity = id;
            item.split = is_train ? Split::train : (v == 0 ? Split::query : Split::gallery);
            std::ostringstream name;
            name << (is_train ? "train" : "test") << "_" << id << "_v" << v;
            item.image_id = name.str();
            item.image = make_view(base, rng, spec);
            ds.push_back(std::move(item));
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& out_dir, const std::string& manifest_name) {
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "images");

    std::ofstream manifest(fs::path(out_dir) / manifest_name);
    if (!manifest) throw std::runtime_error("save_dataset: cannot open manifest in " + out_dir);
    manifest << "image_id,path,identity,split\n";
    for (const DatasetItem& item : ds) {
        std::string rel = "images/" + item.image_id + ".ppm";
        save_image_ppm(item.image, (fs::path(out_dir) / rel).string());
        manifest << item.image_id << "," << rel << "," << item.identity << ","
                 << split_name(item.split) << "\n";
    }
    if (!manifest) throw std::runtime_error("save_dataset: manifest write failed");
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + manifest_path);
    fs::path base_dir = fs::path(manifest_path).parent_path();

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty manifest");
    if (line != "image_id,path,identity,split") {
        throw std::runtime_error("load_dataset: unexpected manifest header: " + line);
    }

    Dataset ds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, path, identity, split;
        if (!std::getline(ss, id, ',') || !std::getline(ss, path, ',') ||
            !std::getline(ss, identity, ',') || !std::getline(ss, split, ',')) {
            throw std::runtime_error("load_dataset: malformed row: " + line);
        }
        DatasetItem item;
        item.image_id = id;
        item.identity = std::stoi(identity);
        item.split = split_from_string(split);
        item.image = load_image_ppm((base_dir / path).string());
        ds.push_back(std::move(item));
    }
    if (ds.empty()) throw std::runtime_error("load_dataset: no items in " + manifest_path);

    // Shapes must agree across the dataset.
    for (const DatasetItem& item : ds) {
        if (!item.image.same_shape(ds.front().image)) {
            throw std::runtime_error("load_dataset: inconsistent image shapes");
        }
    }
    return ds;
}

RetrievalSets split_query_gallery(const Dataset& ds) {
    RetrievalSets sets;
    for (const DatasetItem& item : ds) {
        if (item.split == Split::query) sets.queries.push_back(&item);
        else if (item.split == Split::gallery) sets.gallery.push_back(&item);
    }
    if (sets.queries.empty()) throw std::invalid_argument("dataset has no query split");
    if (sets.gallery.empty()) throw std::invalid_argument("dataset has no gallery split");
    return sets;
}

std::vector<const DatasetItem*> train_items(const Dataset& ds) {
    std::vector<const DatasetItem*> out;
    for (const DatasetItem& item : ds) {
        if (item.split == Split::train) out.push_back(&item);
    }
    return out;
}

}  // namespace muap
