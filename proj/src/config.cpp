#include "muap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace muap {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const KvConfig& cfg, const std::string& key, double fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad numeric value for " + key + ": '" + it->second + "'");
    }
}

long long parse_int(const KvConfig& cfg, const std::string& key, long long fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        std::size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer value for " + key + ": '" + it->second + "'");
    }
}

bool parse_bool(const KvConfig& cfg, const std::string& key, bool fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw std::invalid_argument("config: bad boolean value for " + key + ": '" + it->second + "'");
}

void reject_unknown(const KvConfig& cfg, const std::set<std::string>& known,
                    const std::string& consumer) {
    for (const auto& [key, value] : cfg) {
        if (!known.count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "' for " + consumer);
        }
    }
}

}  // namespace

KvConfig parse_kv_text(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: missing '=' at " + origin + ":" +
                                        std::to_string(lineno));
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("config: empty key at " + origin + ":" +
                                        std::to_string(lineno));
        }
        if (cfg.count(key)) {
            throw std::invalid_argument("config: duplicate key '" + key + "' at " + origin + ":" +
                                        std::to_string(lineno));
        }
        cfg[key] = value;
    }
    return cfg;
}

KvConfig parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str(), path);
}

SyntheticSpec synthetic_spec_from_config(const KvConfig& cfg) {
    static const std::set<std::string> known = {
        "seed",       "n_train_ids", "n_test_ids", "views_per_id", "height",
        "width",      "noise_sigma", "jitter",     "shift_max",
    };
    reject_unknown(cfg, known, "dataset spec");

    SyntheticSpec spec;
    spec.seed = static_cast<std::uint64_t>(parse_int(cfg, "seed", static_cast<long long>(spec.seed)));
    spec.n_train_ids = static_cast<int>(parse_int(cfg, "n_train_ids", spec.n_train_ids));
    spec.n_test_ids = static_cast<int>(parse_int(cfg, "n_test_ids", spec.n_test_ids));
    spec.views_per_id = static_cast<int>(parse_int(cfg, "views_per_id", spec.views_per_id));
    spec.height = static_cast<int>(parse_int(cfg, "height", spec.height));
    spec.width = static_cast<int>(parse_int(cfg, "width", spec.width));
    spec.noise_sigma = parse_double(cfg, "noise_sigma", spec.noise_sigma);
    spec.jitter = parse_double(cfg, "jitter", spec.jitter);
    spec.shift_max = static_cast<int>(parse_int(cfg, "shift_max", spec.shift_max));
    return spec;
}

AttackConfig attack_config_from_config(const KvConfig& cfg) {
    static const std::set<std::string> known = {
        "attack.gamma",     "attack.epsilon",       "attack.lambda",        "attack.w1",
        "attack.w2",        "attack.eta",           "attack.alpha",         "attack.epochs",
        "attack.bins",      "attack.batch_p",       "attack.batch_k",       "attack.n_train_images",
        "attack.seed",      "attack.clamp",         "attack.objective",     "attack.ascend",
        "attack.denom_epsilon",
    };
    reject_unknown(cfg, known, "attack config");

    AttackConfig a;
    if (auto it = cfg.find("attack.gamma"); it != cfg.end()) {
        a.gamma = norm_order_from_string(it->second);
    }
    a.epsilon = parse_double(cfg, "attack.epsilon", a.epsilon);
    a.lambda = parse_double(cfg, "attack.lambda", a.lambda);
    a.w1 = parse_double(cfg, "attack.w1", a.w1);
    a.w2 = parse_double(cfg, "attack.w2", a.w2);
    a.eta = parse_double(cfg, "attack.eta", a.eta);
    a.alpha = parse_double(cfg, "attack.alpha", a.alpha);
    a.epochs = static_cast<int>(parse_int(cfg, "attack.epochs", a.epochs));
    a.bins = static_cast<int>(parse_int(cfg, "attack.bins", a.bins));
    a.batch_p = static_cast<int>(parse_int(cfg, "attack.batch_p", a.batch_p));
    a.batch_k = static_cast<int>(parse_int(cfg, "attack.batch_k", a.batch_k));
    a.n_train_images = static_cast<int>(parse_int(cfg, "attack.n_train_images", a.n_train_images));
    a.seed = static_cast<std::uint64_t>(parse_int(cfg, "attack.seed", static_cast<long long>(a.seed)));
    a.clamp = parse_bool(cfg, "attack.clamp", a.clamp);
    if (auto it = cfg.find("attack.objective"); it != cfg.end()) {
        a.objective = objective_from_string(it->second);
    }
    a.ascend = parse_bool(cfg, "attack.ascend", a.ascend);
    a.denom_epsilon = parse_double(cfg, "attack.denom_epsilon", a.denom_epsilon);
    return a;
}

}  // namespace muap
