#pragma once

#include <optional>
#include <string>
#include <vector>

#include "muap/attack.hpp"
#include "muap/dataset.hpp"
#include "muap/embedder.hpp"
#include "muap/metrics.hpp"

namespace muap {

// A model plus its head under a display name, as used in experiment grids.
struct NamedModel {
    std::string name;
    Embedder embedder;
    ClassifierHead head;
};

// mAP/Rank-1 before and after perturbing the query split (clamped by
// default), plus the drop rates.
AttackReport evaluate_attack(const Embedder& model, const Dataset& dataset, const Perturbation& u,
                             bool clamp = true);

struct MatrixResult {
    std::vector<std::string> source_names;
    std::vector<std::string> target_names;
    std::vector<std::vector<double>> mdr;  // [source][target]
    std::vector<std::vector<double>> rdr;
    std::vector<Perturbation> uaps;        // one per source
};

// Trains one UAP per source model and evaluates it against every target
// on the same dataset; diagonal = white-box.
MatrixResult cross_matrix(const std::vector<NamedModel>& models, const Dataset& dataset,
                          const AttackConfig& cfg);

// UAPs trained on train_dataset, evaluated per (model, test dataset) pair.
struct CrossDatasetResult {
    std::vector<std::string> source_names;
    std::vector<std::string> dataset_names;
    std::vector<std::vector<double>> mdr;  // [source][dataset]
    std::vector<std::vector<double>> rdr;
};

CrossDatasetResult cross_dataset_matrix(const std::vector<NamedModel>& models,
                                        const Dataset& train_dataset,
                                        const std::vector<Dataset>& test_datasets,
                                        const std::vector<std::string>& dataset_names,
                                        const AttackConfig& cfg);

struct SweepPoint {
    double epsilon = 0.0;
    double mdr_whitebox = 0.0;
    std::optional<double> mdr_crossmodel;
};

// One UAP per epsilon; the optional transfer model fills the cross-model
// column.
std::vector<SweepPoint> epsilon_sweep(const NamedModel& model, const NamedModel* transfer,
                                      const Dataset& dataset, const AttackConfig& cfg,
                                      const std::vector<double>& epsilons);

struct EnergyRow {
    std::string name;
    double mean_energy = 0.0;
    double ratio_to_clean = 1.0;
};

// Mean gradient energy of the clean queries (row "clean") followed by one
// row per perturbation applied to the queries.
std::vector<EnergyRow> energy_report(const Dataset& dataset,
                                     const std::vector<std::pair<std::string, Perturbation>>& uaps);

// CSV renderers; numbers use fixed 6-decimal formatting.
std::string matrix_to_csv(const std::vector<std::string>& rows,
                          const std::vector<std::string>& cols,
                          const std::vector<std::vector<double>>& cells,
                          const std::string& corner);
std::string sweep_to_csv(const std::vector<SweepPoint>& points);
std::string energy_to_csv(const std::vector<EnergyRow>& rows);

// Write-temp-then-rename.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace muap
