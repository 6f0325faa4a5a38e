#include "muap/softrank.hpp"

#include <cmath>
#include <stdexcept>

#include "muap/metrics.hpp"

namespace muap {

namespace {

constexpr double kDistanceFloor = 1e-9;

void check_cfg(const SoftApConfig& cfg) {
    if (cfg.bins < 2) throw std::invalid_argument("SoftApConfig: bins must be >= 2");
    if (!(cfg.denom_epsilon > 0.0)) {
        throw std::invalid_argument("SoftApConfig: denom_epsilon must be positive");
    }
}

std::size_t count_positives(const std::vector<char>& labels) {
    std::size_t n = 0;
    for (char l : labels) n += (l != 0);
    return n;
}

// Soft binning of one ranking list: per-item kernel weights, per-item
// prefix masses, and the positive/total prefix totals per bin.
//
// The loss scores each positive by the binned precision it would see with
// itself counted once in full (leave-one-out plus self): this removes the
// bias a split kernel otherwise introduces, so the loss equals exact AP
// whenever the distances are separated by at least 2*delta.
struct SoftBins {
    int bins = 0;
    std::size_t n_pos = 0;
    std::vector<std::vector<double>> weight;  // l x b kernel weights
    std::vector<std::vector<double>> prefix;  // l x b per-item prefix mass
    std::vector<double> pos_prefix;           // b, over positive items
    std::vector<double> total_prefix;         // b, over all items
};

SoftBins bin_masses(const std::vector<double>& distances, const std::vector<char>& labels,
                    const SoftApConfig& cfg) {
    const std::size_t l = distances.size();
    SoftBins sb;
    sb.bins = cfg.bins;
    sb.n_pos = count_positives(labels);
    sb.weight.assign(l, std::vector<double>(cfg.bins, 0.0));
    sb.prefix.assign(l, std::vector<double>(cfg.bins, 0.0));
    sb.pos_prefix.assign(cfg.bins, 0.0);
    sb.total_prefix.assign(cfg.bins, 0.0);

    for (std::size_t i = 0; i < l; ++i) {
        double running = 0.0;
        for (int k = 0; k < cfg.bins; ++k) {
            double w = soft_indicator(distances[i], k + 1, cfg);
            sb.weight[i][k] = w;
            running += w;
            sb.prefix[i][k] = running;
            sb.total_prefix[k] += running;
            if (labels[i]) sb.pos_prefix[k] += running;
        }
    }
    return sb;
}

// Precision seen by positive i fully placed at bin k, among the others.
inline double self_inclusive_precision(const SoftBins& sb, std::size_t i, int k, double eps) {
    double pos_others = sb.pos_prefix[k] - sb.prefix[i][k];
    double total_others = sb.total_prefix[k] - sb.prefix[i][k];
    return (pos_others + 1.0) / (total_others + 1.0 + eps);
}

}  // namespace

double soft_indicator(double d, int k, const SoftApConfig& cfg) {
    check_cfg(cfg);
    if (k < 1 || k > cfg.bins) throw std::invalid_argument("soft_indicator: bin index out of range");
    double delta = cfg.delta();
    double center = (k - 1) * delta;
    double w = 1.0 - std::fabs(d - center) / delta;
    return w > 0.0 ? w : 0.0;
}

std::vector<double> soft_precision(const std::vector<std::vector<double>>& weights,
                                   const std::vector<char>& labels, const SoftApConfig& cfg) {
    check_cfg(cfg);
    if (weights.size() != labels.size()) {
        throw std::invalid_argument("soft_precision: weights/labels length mismatch");
    }
    std::vector<double> prec(cfg.bins, 0.0);
    double cum_pos = 0.0;
    double cum_total = 0.0;
    for (int k = 0; k < cfg.bins; ++k) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            double w = weights[i][k];
            cum_total += w;
            if (labels[i]) cum_pos += w;
        }
        prec[k] = cum_pos / (cum_total + cfg.denom_epsilon);
    }
    return prec;
}

double soft_ap(const std::vector<double>& distances, const std::vector<char>& labels,
               const SoftApConfig& cfg) {
    check_cfg(cfg);
    if (distances.size() != labels.size()) {
        throw std::invalid_argument("soft_ap: distances/labels length mismatch");
    }
    if (count_positives(labels) == 0) throw std::invalid_argument("soft_ap: no positive items");

    SoftBins sb = bin_masses(distances, labels, cfg);
    double loss = 0.0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (!labels[i]) continue;
        for (int k = 0; k < cfg.bins; ++k) {
            double w = sb.weight[i][k];
            if (w == 0.0) continue;
            loss += w * self_inclusive_precision(sb, i, k, cfg.denom_epsilon);
        }
    }
    return loss / static_cast<double>(sb.n_pos);
}

std::vector<double> soft_ap_grad_distances(const std::vector<double>& distances,
                                           const std::vector<char>& labels,
                                           const SoftApConfig& cfg) {
    check_cfg(cfg);
    const std::size_t l = distances.size();
    if (l != labels.size()) {
        throw std::invalid_argument("soft_ap_grad: distances/labels length mismatch");
    }
    std::size_t n_pos = count_positives(labels);
    if (n_pos == 0) throw std::invalid_argument("soft_ap_grad: no positive items");

    const int b = cfg.bins;
    const double delta = cfg.delta();
    const double eps = cfg.denom_epsilon;
    SoftBins sb = bin_masses(distances, labels, cfg);

    // L = (1/P) sum_{i pos} sum_k w_ik A_ik with
    //   A_ik = (pos_others_ik + 1) / (total_others_ik + 1 + eps).
    // d(w_mq) enters directly (m positive) and via the prefixes of every
    // other positive's A for bins k >= q:
    //   dA_ik/dW_mk = ([m pos] - A_ik) / (total_others_ik + 1 + eps).
    // Suffix-sum the coupling terms per positive and globally.
    std::vector<std::vector<double>> suf_beta(l), suf_gamma(l);
    std::vector<double> suf_beta_all(b + 1, 0.0), suf_gamma_all(b + 1, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
        if (!labels[i]) continue;
        suf_beta[i].assign(b + 1, 0.0);
        suf_gamma[i].assign(b + 1, 0.0);
        for (int k = b - 1; k >= 0; --k) {
            double denom = sb.total_prefix[k] - sb.prefix[i][k] + 1.0 + eps;
            double a = self_inclusive_precision(sb, i, k, eps);
            double beta = sb.weight[i][k] / denom;
            double gamma = sb.weight[i][k] * a / denom;
            suf_beta[i][k] = suf_beta[i][k + 1] + beta;
            suf_gamma[i][k] = suf_gamma[i][k + 1] + gamma;
        }
        for (int k = 0; k <= b; ++k) {
            suf_beta_all[k] += suf_beta[i][k];
            suf_gamma_all[k] += suf_gamma[i][k];
        }
    }

    double inv_p = 1.0 / static_cast<double>(n_pos);
    std::vector<double> grad(l, 0.0);
    for (std::size_t m = 0; m < l; ++m) {
        double d = distances[m];
        double acc = 0.0;
        for (int k = 0; k < b; ++k) {
            double off = d - k * delta;
            double a = std::fabs(off);
            // strict interior of the kernel support, excluding kinks
            if (a <= 0.0 || a >= delta) continue;
            double dw = -(off > 0 ? 1.0 : -1.0) / delta;

            double dL_dw;
            if (labels[m]) {
                dL_dw = self_inclusive_precision(sb, m, k, eps) +
                        (suf_beta_all[k] - suf_beta[m][k]) -
                        (suf_gamma_all[k] - suf_gamma[m][k]);
            } else {
                dL_dw = -suf_gamma_all[k];
            }
            acc += inv_p * dL_dw * dw;
        }
        grad[m] = acc;
    }
    return grad;
}

namespace {

void check_image_call(const std::vector<std::vector<double>>& gallery_embeddings,
                      const std::vector<char>& labels, const Embedder& model) {
    if (gallery_embeddings.size() != labels.size()) {
        throw std::invalid_argument("ap_loss: gallery/labels length mismatch");
    }
    if (gallery_embeddings.empty()) throw std::invalid_argument("ap_loss: empty gallery");
    for (const auto& e : gallery_embeddings) {
        if (static_cast<int>(e.size()) != model.embed_dim) {
            throw std::invalid_argument("ap_loss: gallery embedding dim mismatch");
        }
    }
}

std::vector<double> query_distances(const std::vector<double>& q_emb,
                                    const std::vector<std::vector<double>>& gallery_embeddings) {
    std::vector<double> d(gallery_embeddings.size());
    for (std::size_t i = 0; i < gallery_embeddings.size(); ++i) {
        d[i] = embedding_distance(q_emb, gallery_embeddings[i]);
    }
    return d;
}

}  // namespace

double ap_loss(const Image& query_image_perturbed, const Embedder& model,
               const std::vector<std::vector<double>>& gallery_embeddings,
               const std::vector<char>& labels, const SoftApConfig& cfg) {
    check_image_call(gallery_embeddings, labels, model);
    std::vector<double> q_emb = forward(model, query_image_perturbed);
    return soft_ap(query_distances(q_emb, gallery_embeddings), labels, cfg);
}

Grad ap_loss_grad(const Image& query_image_perturbed, const Embedder& model,
                  const std::vector<std::vector<double>>& gallery_embeddings,
                  const std::vector<char>& labels, const SoftApConfig& cfg) {
    check_image_call(gallery_embeddings, labels, model);
    std::vector<double> q_emb = forward(model, query_image_perturbed);
    std::vector<double> d = query_distances(q_emb, gallery_embeddings);
    std::vector<double> dL_dd = soft_ap_grad_distances(d, labels, cfg);

    // Chain through d_i = ||f(q') - e_i||.
    std::vector<double> grad_emb(q_emb.size(), 0.0);
    for (std::size_t i = 0; i < gallery_embeddings.size(); ++i) {
        if (dL_dd[i] == 0.0) continue;
        double scale = dL_dd[i] / std::max(d[i], kDistanceFloor);
        for (std::size_t j = 0; j < q_emb.size(); ++j) {
            grad_emb[j] += scale * (q_emb[j] - gallery_embeddings[i][j]);
        }
    }
    return backward_input(model, query_image_perturbed, grad_emb);
}

}  // namespace muap
