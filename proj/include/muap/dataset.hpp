#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muap/image.hpp"

namespace muap {

enum class Split { train, query, gallery };

std::string split_name(Split s);
Split split_from_string(const std::string& s);

struct DatasetItem {
    std::string image_id;
    int identity = 0;
    Split split = Split::train;
    Image image;
};

using Dataset = std::vector<DatasetItem>;

// Deterministic synthetic identity dataset. Each identity owns a random
// 4x2 color-block pattern upsampled bilinearly to H×W; views add a
// brightness offset, Gaussian noise and an integer shift. Defaults give a
// retrieval problem that small embedders solve well but not with unbounded
// margins, so ranking losses keep usable gradients.
struct SyntheticSpec {
    std::uint64_t seed = 7;
    int n_train_ids = 32;
    int n_test_ids = 16;
    int views_per_id = 8;
    int height = 32;
    int width = 16;
    double noise_sigma = 3.5;
    double jitter = 5.0;
    int shift_max = 2;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Manifest CSV: header `image_id,path,identity,split`; paths are relative
// to the manifest's directory, images stored as P6 PPM.
void save_dataset(const Dataset& ds, const std::string& out_dir,
                  const std::string& manifest_name = "manifest.csv");
Dataset load_dataset(const std::string& manifest_path);

// Pointers into a dataset, split into query and gallery sets.
struct RetrievalSets {
    std::vector<const DatasetItem*> queries;
    std::vector<const DatasetItem*> gallery;
};

RetrievalSets split_query_gallery(const Dataset& ds);
std::vector<const DatasetItem*> train_items(const Dataset& ds);

}  // namespace muap
