#pragma once

#include <optional>
#include <string>
#include <vector>

#include "muap/dataset.hpp"
#include "muap/embedder.hpp"
#include "muap/perturbation.hpp"

namespace muap {

// One query's distances to a gallery with same-identity labels.
struct RankedQuery {
    std::vector<double> distances;
    std::vector<char> labels;  // nonzero = positive
};

// AP of the ranking by ascending distance; ties broken by original index
// (stable sort). Throws if there is no positive.
double exact_ap(const RankedQuery& rq);

// Mean AP over the query set. Gallery embeddings are computed once on clean
// images; u, when given, is applied to query images only.
double mean_ap(const Embedder& model, const std::vector<const DatasetItem*>& queries,
               const std::vector<const DatasetItem*>& gallery,
               const Perturbation* u = nullptr, bool clamp = true);

// Fraction of queries whose nearest gallery item shares the identity.
double rank1(const Embedder& model, const std::vector<const DatasetItem*>& queries,
             const std::vector<const DatasetItem*>& gallery,
             const Perturbation* u = nullptr, bool clamp = true);

// (before - after) / before; before must be positive.
double drop_rate(double before, double after);

struct AttackReport {
    double map_before = 0.0;
    double map_after = 0.0;
    double rank1_before = 0.0;
    double rank1_after = 0.0;
    double mdr = 0.0;
    double rdr = 0.0;
    std::vector<double> per_query_ap;  // after-attack AP per query
};

std::string attack_report_to_json(const AttackReport& r);
AttackReport attack_report_from_json(const std::string& text);

// Euclidean distance between two unit embeddings, in [0, 2] up to rounding.
double embedding_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace muap
