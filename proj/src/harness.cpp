#include "muap/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "muap/regularizer.hpp"

namespace fs = std::filesystem;

namespace muap {

AttackReport evaluate_attack(const Embedder& model, const Dataset& dataset, const Perturbation& u,
                             bool clamp) {
    RetrievalSets sets = split_query_gallery(dataset);
    if (!sets.queries.front()->image.same_shape(u.values)) {
        throw std::invalid_argument("evaluate_attack: perturbation/image shape mismatch");
    }

    AttackReport r;
    r.map_before = mean_ap(model, sets.queries, sets.gallery, nullptr, clamp);
    r.map_after = mean_ap(model, sets.queries, sets.gallery, &u, clamp);
    r.rank1_before = rank1(model, sets.queries, sets.gallery, nullptr, clamp);
    r.rank1_after = rank1(model, sets.queries, sets.gallery, &u, clamp);
    r.mdr = drop_rate(r.map_before, r.map_after);
    r.rdr = r.rank1_before > 0.0 ? drop_rate(r.rank1_before, r.rank1_after) : 0.0;

    // per-query AP of the attacked queries
    std::vector<std::vector<double>> gal_emb;
    std::vector<int> gal_ids;
    for (const DatasetItem* g : sets.gallery) {
        gal_emb.push_back(forward(model, g->image));
        gal_ids.push_back(g->identity);
    }
    for (const DatasetItem* q : sets.queries) {
        std::vector<double> emb = forward(model, apply_perturbation(q->image, u, clamp));
        RankedQuery rq;
        for (std::size_t i = 0; i < gal_emb.size(); ++i) {
            rq.distances.push_back(embedding_distance(emb, gal_emb[i]));
            rq.labels.push_back(gal_ids[i] == q->identity ? 1 : 0);
        }
        r.per_query_ap.push_back(exact_ap(rq));
    }
    return r;
}

MatrixResult cross_matrix(const std::vector<NamedModel>& models, const Dataset& dataset,
                          const AttackConfig& cfg) {
    if (models.empty()) throw std::invalid_argument("cross_matrix: no models");
    MatrixResult result;
    for (const NamedModel& m : models) {
        result.source_names.push_back(m.name);
        result.target_names.push_back(m.name);
    }
    for (const NamedModel& src : models) {
        AttackResult attack = train_uap(src.embedder, dataset, cfg, &src.head);
        std::vector<double> row_mdr, row_rdr;
        for (const NamedModel& tgt : models) {
            AttackReport rep = evaluate_attack(tgt.embedder, dataset, attack.u);
            row_mdr.push_back(rep.mdr);
            row_rdr.push_back(rep.rdr);
        }
        result.mdr.push_back(std::move(row_mdr));
        result.rdr.push_back(std::move(row_rdr));
        result.uaps.push_back(std::move(attack.u));
    }
    return result;
}

CrossDatasetResult cross_dataset_matrix(const std::vector<NamedModel>& models,
                                        const Dataset& train_dataset,
                                        const std::vector<Dataset>& test_datasets,
                                        const std::vector<std::string>& dataset_names,
                                        const AttackConfig& cfg) {
    if (models.empty()) throw std::invalid_argument("cross_dataset_matrix: no models");
    if (test_datasets.size() != dataset_names.size()) {
        throw std::invalid_argument("cross_dataset_matrix: dataset/name count mismatch");
    }
    CrossDatasetResult result;
    for (const NamedModel& m : models) result.source_names.push_back(m.name);
    result.dataset_names = dataset_names;

    for (const NamedModel& src : models) {
        AttackResult attack = train_uap(src.embedder, train_dataset, cfg, &src.head);
        std::vector<double> row_mdr, row_rdr;
        for (const Dataset& test : test_datasets) {
            AttackReport rep = evaluate_attack(src.embedder, test, attack.u);
            row_mdr.push_back(rep.mdr);
            row_rdr.push_back(rep.rdr);
        }
        result.mdr.push_back(std::move(row_mdr));
        result.rdr.push_back(std::move(row_rdr));
    }
    return result;
}

std::vector<SweepPoint> epsilon_sweep(const NamedModel& model, const NamedModel* transfer,
                                      const Dataset& dataset, const AttackConfig& cfg,
                                      const std::vector<double>& epsilons) {
    if (epsilons.empty()) throw std::invalid_argument("epsilon_sweep: empty epsilon list");
    for (std::size_t i = 0; i + 1 < epsilons.size(); ++i) {
        if (!(epsilons[i] < epsilons[i + 1])) {
            throw std::invalid_argument("epsilon_sweep: epsilons must be strictly increasing");
        }
    }
    if (epsilons.front() < 0.0) throw std::invalid_argument("epsilon_sweep: negative epsilon");

    std::vector<SweepPoint> points;
    for (double eps : epsilons) {
        SweepPoint pt;
        pt.epsilon = eps;
        if (eps == 0.0) {
            pt.mdr_whitebox = 0.0;
            if (transfer) pt.mdr_crossmodel = 0.0;
        } else {
            AttackConfig c = cfg;
            c.epsilon = eps;
            AttackResult attack = train_uap(model.embedder, dataset, c, &model.head);
            pt.mdr_whitebox = evaluate_attack(model.embedder, dataset, attack.u).mdr;
            if (transfer) {
                pt.mdr_crossmodel = evaluate_attack(transfer->embedder, dataset, attack.u).mdr;
            }
        }
        points.push_back(pt);
    }
    return points;
}

std::vector<EnergyRow> energy_report(const Dataset& dataset,
                                     const std::vector<std::pair<std::string, Perturbation>>& uaps) {
    RetrievalSets sets = split_query_gallery(dataset);

    auto mean_energy = [&](const Perturbation* u) {
        double sum = 0.0;
        for (const DatasetItem* q : sets.queries) {
            Image img = u ? apply_perturbation(q->image, *u, true) : q->image;
            sum += gradient_energy(img);
        }
        return sum / static_cast<double>(sets.queries.size());
    };

    std::vector<EnergyRow> rows;
    EnergyRow clean;
    clean.name = "clean";
    clean.mean_energy = mean_energy(nullptr);
    clean.ratio_to_clean = 1.0;
    rows.push_back(clean);

    for (const auto& [name, u] : uaps) {
        EnergyRow row;
        row.name = name;
        row.mean_energy = mean_energy(&u);
        row.ratio_to_clean = clean.mean_energy > 0.0 ? row.mean_energy / clean.mean_energy : 0.0;
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string matrix_to_csv(const std::vector<std::string>& rows,
                          const std::vector<std::string>& cols,
                          const std::vector<std::vector<double>>& cells,
                          const std::string& corner) {
    std::ostringstream out;
    out << corner;
    for (const std::string& c : cols) out << "," << c;
    out << "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << rows[r];
        for (std::size_t c = 0; c < cols.size(); ++c) out << "," << fmt(cells[r][c]);
        out << "\n";
    }
    return out.str();
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "epsilon,mdr_whitebox,mdr_crossmodel\n";
    for (const SweepPoint& p : points) {
        out << fmt(p.epsilon) << "," << fmt(p.mdr_whitebox) << ",";
        if (p.mdr_crossmodel) out << fmt(*p.mdr_crossmodel);
        out << "\n";
    }
    return out.str();
}

std::string energy_to_csv(const std::vector<EnergyRow>& rows) {
    std::ostringstream out;
    out << "name,mean_energy,ratio_to_clean\n";
    for (const EnergyRow& r : rows) {
        out << r.name << "," << fmt(r.mean_energy) << "," << fmt(r.ratio_to_clean) << "\n";
    }
    return out.str();
}

void atomic_write_file(const std::string& path, const std::string& content) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("atomic_write_file: cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("atomic_write_file: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

}  // namespace muap
