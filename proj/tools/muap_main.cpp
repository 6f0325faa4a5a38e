#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "muap/attack.hpp"
#include "muap/config.hpp"
#include "muap/dataset.hpp"
#include "muap/embedder.hpp"
#include "muap/harness.hpp"
#include "muap/metrics.hpp"
#include "muap/perturbation.hpp"

namespace fs = std::filesystem;
using namespace muap;

namespace {

std::string stem_of(const std::string& path) {
    return fs::path(path).stem().string();
}

NamedModel load_named_model(const std::string& path) {
    LoadedModel lm = load_model(path);
    return NamedModel{stem_of(path), std::move(lm.embedder), std::move(lm.head)};
}

AttackConfig attack_config_from_cli(const std::string& cfg_path, std::optional<double> lambda,
                                    std::optional<double> epsilon, const std::string& gamma,
                                    const std::string& objective, std::optional<long long> seed) {
    AttackConfig cfg;
    if (!cfg_path.empty()) cfg = attack_config_from_config(parse_kv_file(cfg_path));
    if (lambda) cfg.lambda = *lambda;
    if (epsilon) cfg.epsilon = *epsilon;
    if (!gamma.empty()) cfg.gamma = norm_order_from_string(gamma);
    if (!objective.empty()) cfg.objective = objective_from_string(objective);
    if (seed) cfg.seed = static_cast<std::uint64_t>(*seed);
    return cfg;
}

std::vector<double> parse_epsilons(const std::string& arg) {
    std::vector<double> eps;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        eps.push_back(std::stod(tok));
    }
    if (eps.empty()) throw std::invalid_argument("--epsilons: empty list");
    return eps;
}

void print_report(const AttackReport& r) {
    std::printf("mAP    before %.6f  after %.6f  mDR %.6f\n", r.map_before, r.map_after, r.mdr);
    std::printf("Rank-1 before %.6f  after %.6f  RDR %.6f\n", r.rank1_before, r.rank1_after, r.rdr);
}

int run(int argc, char** argv) {
    CLI::App app{"universal perturbation toolkit for embedding-based retrieval"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_cfg, gd_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("spec", gd_cfg, "dataset spec config")->required();
    gen->add_option("out_dir", gd_out, "output directory")->required();

    // train-embedder
    std::string te_arch, te_manifest, te_out;
    long long te_seed = 1;
    CLI::App* train = app.add_subcommand("train-embedder", "train an embedding model");
    train->add_option("arch", te_arch, "linear | mlp | conv | pool-mlp")->required();
    train->add_option("manifest", te_manifest, "dataset manifest")->required();
    train->add_option("out", te_out, "output model file")->required();
    train->add_option("--seed", te_seed, "training seed");

    // attack
    std::string at_model, at_manifest, at_out, at_cfg, at_gamma, at_objective;
    std::optional<double> at_lambda, at_epsilon;
    std::optional<long long> at_seed;
    CLI::App* attack = app.add_subcommand("attack", "train a universal perturbation");
    attack->add_option("model", at_model)->required();
    attack->add_option("manifest", at_manifest)->required();
    attack->add_option("out", at_out, "output .uap file")->required();
    attack->add_option("--cfg", at_cfg, "attack config file");
    attack->add_option("--lambda", at_lambda, "regularizer weight");
    attack->add_option("--epsilon", at_epsilon, "norm budget");
    attack->add_option("--gamma", at_gamma, "norm order: 1, 2 or inf");
    attack->add_option("--objective", at_objective, "ap | base");
    attack->add_option("--seed", at_seed, "attack seed");

    // eval
    std::string ev_model, ev_manifest, ev_uap, ev_json;
    bool ev_noclamp = false;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a perturbation");
    eval->add_option("model", ev_model)->required();
    eval->add_option("manifest", ev_manifest)->required();
    eval->add_option("uap", ev_uap)->required();
    eval->add_option("--json", ev_json, "write the report as JSON");
    eval->add_flag("--no-clamp", ev_noclamp, "skip clamping attacked queries to [0,255]");

    // matrix
    std::vector<std::string> mx_args;
    std::string mx_cfg, mx_out = ".";
    CLI::App* matrix = app.add_subcommand("matrix", "cross-model attack matrix");
    matrix->add_option("paths", mx_args, "<models...> <manifest>")->required()->expected(-1);
    matrix->add_option("--cfg", mx_cfg, "attack config file");
    matrix->add_option("--out", mx_out, "output directory");

    // sweep
    std::string sw_model, sw_manifest, sw_eps, sw_transfer, sw_cfg, sw_out;
    CLI::App* sweep = app.add_subcommand("sweep", "epsilon sweep");
    sweep->add_option("model", sw_model)->required();
    sweep->add_option("manifest", sw_manifest)->required();
    sweep->add_option("--epsilons", sw_eps, "comma-separated list, e.g. 0,2,4,6,8,10")->required();
    sweep->add_option("--transfer", sw_transfer, "model for the cross-model column");
    sweep->add_option("--cfg", sw_cfg, "attack config file");
    sweep->add_option("--out", sw_out, "output CSV (default stdout)");

    // energy
    std::vector<std::string> en_args;
    std::string en_out;
    CLI::App* energy = app.add_subcommand("energy", "gradient-energy report");
    energy->add_option("paths", en_args, "<manifest> <uaps...>")->required()->expected(-1);
    energy->add_option("--out", en_out, "output CSV (default stdout)");

    // export-uap-ppm
    std::string ex_in, ex_out;
    double ex_amplify = 10.0;
    CLI::App* exp = app.add_subcommand("export-uap-ppm", "export a perturbation for viewing");
    exp->add_option("uap", ex_in)->required();
    exp->add_option("out", ex_out)->required();
    exp->add_option("--amplify", ex_amplify, "value scale before centering at 128");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (gen->parsed()) {
        SyntheticSpec spec = synthetic_spec_from_config(parse_kv_file(gd_cfg));
        Dataset ds = generate_synthetic(spec);
        save_dataset(ds, gd_out);
        std::printf("wrote %zu items to %s\n", ds.size(), gd_out.c_str());
        return 0;
    }

    if (train->parsed()) {
        Dataset ds = load_dataset(te_manifest);
        TrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(te_seed);
        TrainedModel tm = train_embedder(arch_from_string(te_arch), ds, cfg);
        save_model(tm.embedder, tm.head, te_out);
        std::printf("trained %s: train accuracy %.4f, final loss %.6f\n", te_arch.c_str(),
                    tm.train_accuracy, tm.final_loss);
        return 0;
    }

    if (attack->parsed()) {
        NamedModel model = load_named_model(at_model);
        Dataset ds = load_dataset(at_manifest);
        AttackConfig cfg = attack_config_from_cli(at_cfg, at_lambda, at_epsilon, at_gamma,
                                                  at_objective, at_seed);
        AttackResult result = train_uap(model.embedder, ds, cfg, &model.head);
        save_uap(result.u, at_out);
        atomic_write_file(at_out + ".log.jsonl", training_log_to_jsonl(result.log));
        double final_mdr = result.log.empty() ? 0.0 : result.log.back().train_mdr;
        std::printf("wrote %s (|u|_%s = %.6f, train mDR %.6f)\n", at_out.c_str(),
                    norm_order_name(cfg.gamma).c_str(), norm_of(result.u.values, cfg.gamma),
                    final_mdr);
        return 0;
    }

    if (eval->parsed()) {
        NamedModel model = load_named_model(ev_model);
        Dataset ds = load_dataset(ev_manifest);
        Perturbation u = load_uap(ev_uap);
        AttackReport report = evaluate_attack(model.embedder, ds, u, !ev_noclamp);
        print_report(report);
        if (!ev_json.empty()) atomic_write_file(ev_json, attack_report_to_json(report));
        return 0;
    }

    if (matrix->parsed()) {
        if (mx_args.size() < 2) {
            throw CLI::ValidationError("matrix", "expected <models...> <manifest>");
        }
        std::string manifest = mx_args.back();
        std::vector<NamedModel> models;
        for (std::size_t i = 0; i + 1 < mx_args.size(); ++i) {
            models.push_back(load_named_model(mx_args[i]));
        }
        Dataset ds = load_dataset(manifest);
        AttackConfig cfg;
        if (!mx_cfg.empty()) cfg = attack_config_from_config(parse_kv_file(mx_cfg));
        MatrixResult result = cross_matrix(models, ds, cfg);
        atomic_write_file((fs::path(mx_out) / "matrix_mdr.csv").string(),
                          matrix_to_csv(result.source_names, result.target_names, result.mdr,
                                        "source\\target"));
        atomic_write_file((fs::path(mx_out) / "matrix_rdr.csv").string(),
                          matrix_to_csv(result.source_names, result.target_names, result.rdr,
                                        "source\\target"));
        for (std::size_t i = 0; i < result.uaps.size(); ++i) {
            save_uap(result.uaps[i],
                     (fs::path(mx_out) / ("uap_" + result.source_names[i] + ".uap")).string());
        }
        std::printf("wrote matrix_mdr.csv and matrix_rdr.csv to %s\n", mx_out.c_str());
        return 0;
    }

    if (sweep->parsed()) {
        NamedModel model = load_named_model(sw_model);
        std::optional<NamedModel> transfer;
        if (!sw_transfer.empty()) transfer = load_named_model(sw_transfer);
        Dataset ds = load_dataset(sw_manifest);
        AttackConfig cfg;
        if (!sw_cfg.empty()) cfg = attack_config_from_config(parse_kv_file(sw_cfg));
        std::vector<SweepPoint> points =
            epsilon_sweep(model, transfer ? &*transfer : nullptr, ds, cfg, parse_epsilons(sw_eps));
        std::string csv = sweep_to_csv(points);
        if (sw_out.empty()) std::fputs(csv.c_str(), stdout);
        else atomic_write_file(sw_out, csv);
        return 0;
    }

    if (energy->parsed()) {
        if (en_args.empty()) throw CLI::ValidationError("energy", "expected <manifest> [uaps...]");
        Dataset ds = load_dataset(en_args.front());
        std::vector<std::pair<std::string, Perturbation>> uaps;
        for (std::size_t i = 1; i < en_args.size(); ++i) {
            uaps.emplace_back(stem_of(en_args[i]), load_uap(en_args[i]));
        }
        std::string csv = energy_to_csv(energy_report(ds, uaps));
        if (en_out.empty()) std::fputs(csv.c_str(), stdout);
        else atomic_write_file(en_out, csv);
        return 0;
    }

    if (exp->parsed()) {
        Perturbation u = load_uap(ex_in);
        if (u.values.channels != 3) {
            throw std::runtime_error("export-uap-ppm: perturbation must have 3 channels");
        }
        Image vis = u.values;
        for (float& p : vis.pixels) {
            p = clamp_pixel(static_cast<float>(p * ex_amplify + 128.0));
        }
        save_image_ppm(vis, ex_out);
        std::printf("wrote %s\n", ex_out.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
