#include "muap/attack.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "muap/errors.hpp"
#include "muap/metrics.hpp"
#include "muap/rng.hpp"
#include "vendor_json.hpp"

namespace muap {

namespace {

// Relative slack on the saturation check; keeps projection exactly
// idempotent on already-projected vectors.
constexpr double kSaturationSlack = 1e-6;
constexpr double kGradNormFloor = 1e-12;

}  // namespace

std::string objective_name(Objective o) {
    return o == Objective::ap ? "ap" : "base";
}

Objective objective_from_string(const std::string& s) {
    if (s == "ap") return Objective::ap;
    if (s == "base") return Objective::base;
    throw std::invalid_argument("unknown objective '" + s + "' (expected ap or base)");
}

void validate(const AttackConfig& cfg) {
    if (!(cfg.alpha > 0.0)) throw std::invalid_argument("AttackConfig: alpha must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("AttackConfig: epochs must be >= 0");
    if (cfg.batch_p * cfg.batch_k < 2) throw std::invalid_argument("AttackConfig: batch P*K must be >= 2");
    if (cfg.objective == Objective::ap && cfg.batch_k < 2) {
        throw std::invalid_argument("AttackConfig: K must be >= 2 for the ap objective");
    }
    if (cfg.epsilon < 0.0) throw std::invalid_argument("AttackConfig: epsilon must be >= 0");
    if (cfg.lambda < 0.0) throw std::invalid_argument("AttackConfig: lambda must be >= 0");
    if (cfg.lambda > 0.0 && cfg.w1 <= 0.0 && cfg.w2 <= 0.0) {
        throw std::invalid_argument("AttackConfig: lambda > 0 requires w1 or w2 positive");
    }
    if (cfg.eta < 0.0) throw std::invalid_argument("AttackConfig: eta must be >= 0");
    if (cfg.bins < 2) throw std::invalid_argument("AttackConfig: bins must be >= 2");
    if (cfg.n_train_images < 2) throw std::invalid_argument("AttackConfig: n_train_images must be >= 2");
}

void momentum_step(MomentumState& state, const Grad& grad, Perturbation& u,
                   const AttackConfig& cfg) {
    if (state.g.empty()) state.g.assign(grad.size(), 0.0);
    if (state.g.size() != grad.size() || grad.size() != u.values.size()) {
        throw std::invalid_argument("momentum_step: shape mismatch");
    }
    double l1 = 0.0;
    for (double v : grad) l1 += std::fabs(v);
    double inv = l1 >= kGradNormFloor ? 1.0 / l1 : 1.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.g[i] = cfg.eta * state.g[i] + grad[i] * inv;
    }
    ++state.t;

    float step = static_cast<float>(cfg.ascend ? cfg.alpha : -cfg.alpha);
    for (std::size_t i = 0; i < u.values.pixels.size(); ++i) {
        double g = state.g[i];
        if (g > 0.0) u.values.pixels[i] += step;
        else if (g < 0.0) u.values.pixels[i] -= step;
    }
}

bool saturated(const Perturbation& u) {
    return norm_of(u.values, u.gamma) > static_cast<double>(u.epsilon) * (1.0 + kSaturationSlack);
}

namespace {

void project_l1(Image& v, double eps) {
    double s = norm_l1(v);
    if (s <= eps * (1.0 + kSaturationSlack)) return;
    if (eps <= 0.0) {
        std::fill(v.pixels.begin(), v.pixels.end(), 0.0f);
        return;
    }
    // sorted soft-threshold (Duchi et al.)
    std::vector<double> mu(v.pixels.size());
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = std::fabs(static_cast<double>(v.pixels[i]));
    std::sort(mu.begin(), mu.end(), std::greater<double>());
    double cssv = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        cssv += mu[j];
        double cand = (cssv - eps) / static_cast<double>(j + 1);
        if (mu[j] - cand > 0.0) theta = cand;
        else break;
    }
    for (float& p : v.pixels) {
        double a = std::fabs(static_cast<double>(p)) - theta;
        p = a > 0.0 ? static_cast<float>(p > 0 ? a : -a) : 0.0f;
    }
}

}  // namespace

Perturbation project(Perturbation u) {
    double eps = static_cast<double>(u.epsilon);
    switch (u.gamma) {
        case NormOrder::linf: {
            float e = u.epsilon;
            for (float& p : u.values.pixels) {
                if (p > e) p = e;
                else if (p < -e) p = -e;
            }
            break;
        }
        case NormOrder::l2: {
            double n = norm_l2(u.values);
            if (n > eps * (1.0 + kSaturationSlack)) {
                double scale = eps / n;
                for (float& p : u.values.pixels) {
                    p = static_cast<float>(static_cast<double>(p) * scale);
                }
            }
            break;
        }
        case NormOrder::l1:
            project_l1(u.values, eps);
            break;
    }
    return u;
}

std::pair<double, std::vector<double>> base_loss(const std::vector<double>& logits) {
    if (logits.size() < 2) throw std::invalid_argument("base_loss: need >= 2 classes");
    // softmax is monotone, so the least likely class is the smallest logit
    int y_ll = static_cast<int>(std::min_element(logits.begin(), logits.end()) - logits.begin());
    return base_loss_with_target(logits, y_ll);
}

std::pair<double, std::vector<double>> base_loss_with_target(const std::vector<double>& logits,
                                                             int target) {
    if (logits.size() < 2) throw std::invalid_argument("base_loss: need >= 2 classes");
    if (target < 0 || target >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("base_loss: target out of range");
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    double loss = -(logits[target] - mx - std::log(z));
    std::vector<double> grad(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        grad[c] = std::exp(logits[c] - mx) / z - (static_cast<int>(c) == target ? 1.0 : 0.0);
    }
    return {loss, std::move(grad)};
}

BatchLoss combined_loss_grad(const Perturbation& u, const std::vector<const DatasetItem*>& batch,
                             const Embedder& model, const ClassifierHead* head,
                             const AttackConfig& cfg) {
    if (batch.size() < 2) throw std::invalid_argument("combined_loss_grad: batch too small");
    if (cfg.objective == Objective::base && (head == nullptr || head->n_classes < 2)) {
        throw std::invalid_argument("combined_loss_grad: base objective needs a classifier head");
    }
    for (const DatasetItem* item : batch) {
        if (!item->image.same_shape(u.values)) {
            throw std::invalid_argument("combined_loss_grad: image/perturbation shape mismatch");
        }
    }

    SoftApConfig soft = cfg.soft_cfg();
    MiConfig mi = cfg.mi_cfg();

    // Clean embeddings double as the in-batch gallery.
    std::vector<std::vector<double>> clean_emb;
    if (cfg.objective == Objective::ap) {
        clean_emb.reserve(batch.size());
        for (const DatasetItem* item : batch) clean_emb.push_back(forward(model, item->image));
    }
    // Least likely classes are fixed by the clean images (Kurakin-style).
    std::vector<int> y_ll;
    if (cfg.objective == Objective::base) {
        y_ll.reserve(batch.size());
        for (const DatasetItem* item : batch) {
            std::vector<double> logits = classify(model, *head, item->image);
            y_ll.push_back(static_cast<int>(std::min_element(logits.begin(), logits.end()) -
                                            logits.begin()));
        }
    }

    BatchLoss out;
    out.grad.assign(u.values.size(), 0.0);

    for (std::size_t j = 0; j < batch.size(); ++j) {
        const DatasetItem& q = *batch[j];
        Image q_prime = apply_perturbation(q.image, u, cfg.clamp);

        double obj = 0.0;
        Grad g;
        if (cfg.objective == Objective::ap) {
            std::vector<std::vector<double>> gallery;
            std::vector<char> labels;
            bool has_pos = false;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (i == j) continue;
                gallery.push_back(clean_emb[i]);
                char pos = batch[i]->identity == q.identity ? 1 : 0;
                labels.push_back(pos);
                has_pos |= (pos != 0);
            }
            if (!has_pos) {
                ++out.skipped;
                continue;
            }
            obj = ap_loss(q_prime, model, gallery, labels, soft);
            g = ap_loss_grad(q_prime, model, gallery, labels, soft);
        } else {
            std::vector<double> logits = classify(model, *head, q_prime);
            auto [loss, dlogits] = base_loss_with_target(logits, y_ll[j]);
            obj = loss;
            std::vector<double> d_raw(head->embed_dim, 0.0);
            for (int d = 0; d < head->embed_dim; ++d) {
                const float* row = head->weight.data() + static_cast<std::size_t>(d) * head->n_classes;
                double acc = 0.0;
                for (int c = 0; c < head->n_classes; ++c) acc += static_cast<double>(row[c]) * dlogits[c];
                d_raw[d] = acc;
            }
            g = backward_input_raw(model, q_prime, d_raw);
        }

        double mi_val = 0.0;
        if (cfg.lambda > 0.0) {
            mi_val = mi_loss(q_prime, mi);
            Grad mg = mi_grad(q_prime, mi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.lambda * mg[i];
        }

        if (cfg.clamp) {
            // clamp blocks the gradient where it changed the pixel
            for (std::size_t i = 0; i < g.size(); ++i) {
                float raw = q.image.pixels[i] + u.values.pixels[i];
                if (raw != q_prime.pixels[i]) g[i] = 0.0;
            }
        }

        out.ap += obj;
        out.mi += mi_val;
        out.total += obj + cfg.lambda * mi_val;
        for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
        ++out.used;
    }

    if (out.used == 0) {
        throw std::invalid_argument("combined_loss_grad: no query in the batch has a positive");
    }
    double inv = 1.0 / static_cast<double>(out.used);
    out.ap *= inv;
    out.mi *= inv;
    out.total *= inv;
    for (double& v : out.grad) v *= inv;
    return out;
}

namespace {

// mAP over a flat item list, each item acting as query against the others.
// Queries without positives are skipped.
double leave_one_out_map(const Embedder& model, const std::vector<const DatasetItem*>& items,
                         const Perturbation* u, bool clamp) {
    std::vector<std::vector<double>> clean;
    clean.reserve(items.size());
    for (const DatasetItem* it : items) clean.push_back(forward(model, it->image));

    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < items.size(); ++j) {
        std::vector<double> q_emb =
            u ? forward(model, apply_perturbation(items[j]->image, *u, clamp)) : clean[j];
        RankedQuery rq;
        bool has_pos = false;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i == j) continue;
            rq.distances.push_back(embedding_distance(q_emb, clean[i]));
            char pos = items[i]->identity == items[j]->identity ? 1 : 0;
            rq.labels.push_back(pos);
            has_pos |= (pos != 0);
        }
        if (!has_pos) continue;
        sum += exact_ap(rq);
        ++used;
    }
    return used > 0 ? sum / static_cast<double>(used) : 0.0;
}

}  // namespace

AttackResult train_uap(const Embedder& model, const Dataset& dataset, const AttackConfig& cfg,
                       const ClassifierHead* head) {
    validate(cfg);
    std::vector<const DatasetItem*> train = train_items(dataset);
    if (train.empty()) throw std::invalid_argument("train_uap: empty train split");

    // Deterministic subset of the train split.
    Rng pick_rng(derive_seed(cfg.seed, 1));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    pick_rng.shuffle(order);
    std::size_t take = std::min<std::size_t>(train.size(), static_cast<std::size_t>(cfg.n_train_images));
    std::vector<const DatasetItem*> selected;
    selected.reserve(take);
    for (std::size_t i = 0; i < take; ++i) selected.push_back(train[order[i]]);

    std::map<int, std::vector<const DatasetItem*>> by_id;
    for (const DatasetItem* it : selected) by_id[it->identity].push_back(it);
    std::vector<int> id_list;
    for (const auto& [id, items] : by_id) id_list.push_back(id);

    const Image& probe = train.front()->image;
    AttackResult result;
    result.u = Perturbation::zeros(probe.channels, probe.height, probe.width, cfg.gamma,
                                   static_cast<float>(cfg.epsilon));

    double clean_map = leave_one_out_map(model, selected, nullptr, cfg.clamp);

    MomentumState state;
    Rng epoch_rng(derive_seed(cfg.seed, 2));
    int chunk = std::min<int>(cfg.batch_p, static_cast<int>(id_list.size()));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        epoch_rng.shuffle(id_list);
        double sum_ap = 0.0, sum_mi = 0.0, sum_total = 0.0;
        int batches = 0;

        for (std::size_t start = 0; start + chunk <= id_list.size(); start += chunk) {
            std::vector<const DatasetItem*> batch;
            for (int p = 0; p < chunk; ++p) {
                std::vector<const DatasetItem*> pool = by_id[id_list[start + p]];
                epoch_rng.shuffle(pool);
                for (int k = 0; k < cfg.batch_k; ++k) {
                    batch.push_back(pool[static_cast<std::size_t>(k) % pool.size()]);
                }
            }
            BatchLoss bl = combined_loss_grad(result.u, batch, model, head, cfg);
            if (!std::isfinite(bl.total)) {
                throw DivergenceError(epoch, "train_uap: non-finite loss at epoch " +
                                                 std::to_string(epoch));
            }
            momentum_step(state, bl.grad, result.u, cfg);
            if (saturated(result.u)) result.u = project(std::move(result.u));

            sum_ap += bl.ap;
            sum_mi += bl.mi;
            sum_total += bl.total;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        if (batches > 0) {
            rec.loss_ap = sum_ap / batches;
            rec.loss_mi = sum_mi / batches;
            rec.loss_total = sum_total / batches;
        }
        rec.u_norm = norm_of(result.u.values, cfg.gamma);
        double att_map = leave_one_out_map(model, selected, &result.u, cfg.clamp);
        rec.train_mdr = clean_map > 0.0 ? (clean_map - att_map) / clean_map : 0.0;
        result.log.push_back(rec);
    }
    return result;
}

std::string training_log_to_jsonl(const std::vector<EpochRecord>& log) {
    std::ostringstream out;
    for (const EpochRecord& r : log) {
        nlohmann::json j;
        j["epoch"] = r.epoch;
        j["loss_ap"] = r.loss_ap;
        j["loss_mi"] = r.loss_mi;
        j["loss_total"] = r.loss_total;
        j["u_norm"] = r.u_norm;
        j["train_mdr"] = r.train_mdr;
        out << j.dump() << "\n";
    }
    return out.str();
}

}  // namespace muap
