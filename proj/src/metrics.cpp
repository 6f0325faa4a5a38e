#include "muap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vendor_json.hpp"

namespace muap {

double exact_ap(const RankedQuery& rq) {
    if (rq.distances.size() != rq.labels.size()) {
        throw std::invalid_argument("exact_ap: distances and labels differ in length");
    }
    if (rq.distances.empty()) throw std::invalid_argument("exact_ap: empty ranking");

    std::size_t n_pos = 0;
    for (char l : rq.labels) n_pos += (l != 0);
    if (n_pos == 0) throw std::invalid_argument("exact_ap: query has no positive gallery item");

    std::vector<std::size_t> order(rq.distances.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rq.distances[a] < rq.distances[b];
    });

    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (rq.labels[order[k]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(n_pos);
}

double embedding_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

namespace {

struct EvalContext {
    std::vector<std::vector<double>> gallery_emb;
    std::vector<int> gallery_ids;
};

EvalContext embed_gallery(const Embedder& model, const std::vector<const DatasetItem*>& gallery) {
    if (gallery.empty()) throw std::invalid_argument("evaluation: empty gallery");
    EvalContext ctx;
    ctx.gallery_emb.reserve(gallery.size());
    for (const DatasetItem* g : gallery) {
        ctx.gallery_emb.push_back(forward(model, g->image));
        ctx.gallery_ids.push_back(g->identity);
    }
    return ctx;
}

std::vector<double> embed_query(const Embedder& model, const DatasetItem& q,
                                const Perturbation* u, bool clamp) {
    if (u == nullptr) return forward(model, q.image);
    return forward(model, apply_perturbation(q.image, *u, clamp));
}

RankedQuery rank_against(const EvalContext& ctx, const std::vector<double>& q_emb, int q_identity) {
    RankedQuery rq;
    rq.distances.reserve(ctx.gallery_emb.size());
    rq.labels.reserve(ctx.gallery_emb.size());
    for (std::size_t i = 0; i < ctx.gallery_emb.size(); ++i) {
        rq.distances.push_back(embedding_distance(q_emb, ctx.gallery_emb[i]));
        rq.labels.push_back(ctx.gallery_ids[i] == q_identity ? 1 : 0);
    }
    return rq;
}

}  // namespace

double mean_ap(const Embedder& model, const std::vector<const DatasetItem*>& queries,
               const std::vector<const DatasetItem*>& gallery, const Perturbation* u, bool clamp) {
    if (queries.empty()) throw std::invalid_argument("mean_ap: empty query set");
    EvalContext ctx = embed_gallery(model, gallery);
    double sum = 0.0;
    for (const DatasetItem* q : queries) {
        try {
            sum += exact_ap(rank_against(ctx, embed_query(model, *q, u, clamp), q->identity));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " (query " + q->image_id + ")");
        }
    }
    return sum / static_cast<double>(queries.size());
}

double rank1(const Embedder& model, const std::vector<const DatasetItem*>& queries,
             const std::vector<const DatasetItem*>& gallery, const Perturbation* u, bool clamp) {
    if (queries.empty()) throw std::invalid_argument("rank1: empty query set");
    EvalContext ctx = embed_gallery(model, gallery);
    std::size_t hits = 0;
    for (const DatasetItem* q : queries) {
        std::vector<double> emb = embed_query(model, *q, u, clamp);
        std::size_t best = 0;
        double best_d = embedding_distance(emb, ctx.gallery_emb[0]);
        for (std::size_t i = 1; i < ctx.gallery_emb.size(); ++i) {
            double d = embedding_distance(emb, ctx.gallery_emb[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (ctx.gallery_ids[best] == q->identity) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double drop_rate(double before, double after) {
    if (!(before > 0.0)) throw std::invalid_argument("drop_rate: undefined for before <= 0");
    return (before - after) / before;
}

std::string attack_report_to_json(const AttackReport& r) {
    nlohmann::json j;
    j["map_before"] = r.map_before;
    j["map_after"] = r.map_after;
    j["rank1_before"] = r.rank1_before;
    j["rank1_after"] = r.rank1_after;
    j["mdr"] = r.mdr;
    j["rdr"] = r.rdr;
    j["per_query_ap"] = r.per_query_ap;
    return j.dump(2) + "\n";
}

AttackReport attack_report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    AttackReport r;
    r.map_before = j.at("map_before").get<double>();
    r.map_after = j.at("map_after").get<double>();
    r.rank1_before = j.at("rank1_before").get<double>();
    r.rank1_after = j.at("rank1_after").get<double>();
    r.mdr = j.at("mdr").get<double>();
    r.rdr = j.at("rdr").get<double>();
    r.per_query_ap = j.at("per_query_ap").get<std::vector<double>>();
    return r;
}

}  // namespace muap
