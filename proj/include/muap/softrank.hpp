#pragma once

#include <vector>

#include "muap/embedder.hpp"
#include "muap/image.hpp"

namespace muap {

// Histogram approximation of AP over embedding distances in [0,2]:
// b bin centers at (k-1)*delta with delta = 2/(b-1).
struct SoftApConfig {
    int bins = 25;
    double denom_epsilon = 1e-8;

    double delta() const { return 2.0 / (bins - 1); }
};

// Triangular kernel weight of distance d for bin k (1-based).
double soft_indicator(double d, int k, const SoftApConfig& cfg);

// Binned precision: cumulative positive mass over cumulative total mass
// (plus denom_epsilon). weights is l rows × b columns.
std::vector<double> soft_precision(const std::vector<std::vector<double>>& weights,
                                   const std::vector<char>& labels, const SoftApConfig& cfg);

// Histogram AP of a fixed distance list; the target the attack minimizes.
// Each positive is scored by the binned precision it would see with itself
// counted once in full, so the value equals exact AP whenever distances
// are separated by at least 2*delta and converges as bins grow.
double soft_ap(const std::vector<double>& distances, const std::vector<char>& labels,
               const SoftApConfig& cfg);

// d(soft_ap)/d(distances); kernel kinks and out-of-support distances get
// subgradient 0.
std::vector<double> soft_ap_grad_distances(const std::vector<double>& distances,
                                           const std::vector<char>& labels,
                                           const SoftApConfig& cfg);

// List-wise loss of a perturbed query image against fixed unit-norm gallery
// embeddings.
double ap_loss(const Image& query_image_perturbed, const Embedder& model,
               const std::vector<std::vector<double>>& gallery_embeddings,
               const std::vector<char>& labels, const SoftApConfig& cfg);

// Exact analytic gradient of ap_loss with respect to the perturbed query
// image (pixel units).
Grad ap_loss_grad(const Image& query_image_perturbed, const Embedder& model,
                  const std::vector<std::vector<double>>& gallery_embeddings,
                  const std::vector<char>& labels, const SoftApConfig& cfg);

}  // namespace muap
