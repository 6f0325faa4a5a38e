#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "muap/dataset.hpp"
#include "muap/embedder.hpp"
#include "muap/perturbation.hpp"
#include "muap/regularizer.hpp"
#include "muap/softrank.hpp"

namespace muap {

enum class Objective { ap, base };

std::string objective_name(Objective o);
Objective objective_from_string(const std::string& s);

// Hyperparameters of the perturbation training loop.
//
// w2 defaults to 1/255^2: the regularizer sums raw pixel-unit differences,
// so the weight rescales its gradient to the magnitude it would have on
// [0,1]-valued images, where lambda=10 balances it against the ranking
// term. w1=1/255 is the matching l1-form weight.
struct AttackConfig {
    NormOrder gamma = NormOrder::linf;
    double epsilon = 10.0;
    double lambda = 10.0;
    double w1 = 0.0;
    double w2 = 1.0 / (255.0 * 255.0);
    double eta = 0.4;        // momentum decay
    double alpha = 0.25;     // step size in pixel units
    int epochs = 50;
    int bins = 11;           // wide kernels keep in-batch rankings inside support
    int batch_p = 8;         // identities per batch
    int batch_k = 4;         // instances per identity
    int n_train_images = 128;
    std::uint64_t seed = 1;
    bool clamp = false;      // clamp q+u inside the training loss
    Objective objective = Objective::ap;
    bool ascend = false;     // debug: update with the printed '+' sign
    double denom_epsilon = 1e-8;

    SoftApConfig soft_cfg() const { return SoftApConfig{bins, denom_epsilon}; }
    MiConfig mi_cfg() const { return MiConfig{w1, w2}; }
};

void validate(const AttackConfig& cfg);

struct MomentumState {
    Grad g;
    int t = 0;
};

// g_t = eta*g_{t-1} + grad/||grad||_1 (unnormalized when ||grad||_1 < 1e-12);
// u -= alpha * sign(g_t), with sign(0) = 0. The config's ascend flag flips
// the update sign.
void momentum_step(MomentumState& state, const Grad& grad, Perturbation& u,
                   const AttackConfig& cfg);

// True when ||u||_gamma exceeds epsilon beyond the saturation slack.
bool saturated(const Perturbation& u);

// Nearest point of the epsilon-ball: elementwise clamp (inf), rescale (2),
// or sorted soft-threshold Euclidean projection (1). Idempotent.
Perturbation project(Perturbation u);

// loss = -log softmax(logits)[y_LL] with y_LL the least likely class of the
// given logits (ties -> lowest index); grad is w.r.t. the logits.
std::pair<double, std::vector<double>> base_loss(const std::vector<double>& logits);
std::pair<double, std::vector<double>> base_loss_with_target(const std::vector<double>& logits,
                                                             int target);

struct BatchLoss {
    double total = 0.0;
    double ap = 0.0;   // objective part (ranking or classification)
    double mi = 0.0;   // unweighted regularizer part
    Grad grad;
    int used = 0;      // queries contributing
    int skipped = 0;   // queries without in-batch positives
};

// Mean over batch members of the per-query objective plus lambda times the
// regularizer, each member acting as query against the clean others.
// grad is d(total)/du. head may be null for the ap objective.
BatchLoss combined_loss_grad(const Perturbation& u, const std::vector<const DatasetItem*>& batch,
                             const Embedder& model, const ClassifierHead* head,
                             const AttackConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double loss_ap = 0.0;
    double loss_mi = 0.0;
    double loss_total = 0.0;
    double u_norm = 0.0;
    double train_mdr = 0.0;
};

struct AttackResult {
    Perturbation u;
    std::vector<EpochRecord> log;
};

// Algorithm: u <- 0; per epoch, PK mini-batches over a deterministic image
// subset; momentum-sign update then saturation projection per batch.
AttackResult train_uap(const Embedder& model, const Dataset& dataset, const AttackConfig& cfg,
                       const ClassifierHead* head = nullptr);

std::string training_log_to_jsonl(const std::vector<EpochRecord>& log);

}  // namespace muap
