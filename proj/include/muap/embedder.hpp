#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muap/dataset.hpp"
#include "muap/image.hpp"

namespace muap {

enum class Arch : std::uint8_t { linear = 0, mlp = 1, conv = 2, pool_mlp = 3 };

std::string arch_name(Arch a);
Arch arch_from_string(const std::string& s);

enum class LayerKind : std::uint8_t {
    dense = 0,
    relu = 1,
    conv3x3 = 2,
    global_avg_pool = 3,
    patch_avg_pool = 4,
};

struct LayerDesc {
    LayerKind kind;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    int pool = 0;  // patch size for patch_avg_pool
    std::size_t w_off = 0, w_len = 0;
    std::size_t b_off = 0, b_len = 0;
};

// Fixed-parameter differentiable embedding network. Parameters live in one
// flat f32 array; layer descriptors carry shapes and offsets into it.
// Inputs are pixel-unit images; the network scales them by 1/255 up front.
struct Embedder {
    Arch arch = Arch::linear;
    int in_c = 0, in_h = 0, in_w = 0;
    int embed_dim = 0;
    std::vector<LayerDesc> layers;
    std::vector<float> params;

    std::size_t input_size() const {
        return static_cast<std::size_t>(in_c) * in_h * in_w;
    }
};

// Head for identity classification during training and for the
// least-likely-class objective; consumes the pre-normalization feature.
struct ClassifierHead {
    int embed_dim = 0;
    int n_classes = 0;
    std::vector<float> weight;  // embed_dim × n_classes, row-major

    // Maps original identity labels to class columns 0..n_classes-1.
    std::vector<int> class_identities;
};

// l2-normalized embedding; throws DegenerateEmbeddingError when the raw
// feature norm is below 1e-12.
std::vector<double> forward(const Embedder& model, const Image& x);

// Pre-normalization feature.
std::vector<double> raw_feature(const Embedder& model, const Image& x);

// d(grad_out · forward(x))/dx in pixel units. grad_out acts on the unit
// embedding; the normalization Jacobian (I - y^y^T)/||y|| is applied before
// backpropagating through the layers.
Grad backward_input(const Embedder& model, const Image& x, const std::vector<double>& grad_out);

// d(grad_raw · raw_feature(x))/dx in pixel units, without the
// normalization Jacobian; used by the classification objective.
Grad backward_input_raw(const Embedder& model, const Image& x, const std::vector<double>& grad_raw);

// logits = head^T raw_feature(x).
std::vector<double> classify(const Embedder& model, const ClassifierHead& head, const Image& x);

struct TrainConfig {
    double lr = 0.02;
    double momentum = 0.9;
    int epochs = 150;
    int batch_size = 32;
    std::uint64_t seed = 1;
    int embed_dim = 16;
    int hidden = 64;
    int conv_c1 = 8;
    int conv_c2 = 16;
    int patch = 4;
};

struct TrainedModel {
    Embedder embedder;
    ClassifierHead head;
    double train_accuracy = 0.0;
    double final_loss = 0.0;
};

// Softmax cross-entropy over train identities, seeded mini-batch SGD with
// momentum. Deterministic from cfg.seed. Throws DivergenceError on NaN loss.
TrainedModel train_embedder(Arch arch, const Dataset& dataset, const TrainConfig& cfg);

// Model file: "MEMB" magic, version, architecture code, embed_dim, layer
// shape table, f32 parameters (classifier head appended as a table entry);
// bit-exact round-trip.
void save_model(const Embedder& model, const ClassifierHead& head, const std::string& path);
struct LoadedModel {
    Embedder embedder;
    ClassifierHead head;
};
LoadedModel load_model(const std::string& path);

}  // namespace muap
