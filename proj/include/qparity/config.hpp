#pragma once

// Run configuration: `key = value` lines under [section] headers, flag
// overrides on top, every key checked against a typed registry.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qparity/pipelines.hpp"

namespace qparity {

enum class KeyType { Int, Real, Bool, Text, Choice, IntList, RealList };

struct KeySpec {
    KeyType type;
    std::string default_value;
    std::vector<std::string> choices; // KeyType::Choice
    std::string help;
};

/// Every accepted key as `section.key`.
inline const std::map<std::string, KeySpec>& key_registry() {
    static const std::map<std::string, KeySpec> keys{
        {"run.seeds", {KeyType::IntList, "42,123,456,789,1024", {}, "seed list"}},
        {"run.jobs", {KeyType::Int, "1", {}, "concurrent seed runs"}},
        {"run.out", {KeyType::Text, "", {}, "output directory"}},
        {"run.verbosity", {KeyType::Int, "1", {}, "0 quiet, 1 normal, 2 chatty"}},

        {"dataset.generator", {KeyType::Choice, "", {"", "parity5", "parity5_5", "synthetic_3xor", "hidden_direction"}, "built-in generator"}},
        {"dataset.path", {KeyType::Text, "", {}, "CSV/TSV table"}},
        {"dataset.embeddings", {KeyType::Text, "", {}, "f32 embedding sidecar"}},
        {"dataset.label_column", {KeyType::Text, "label", {}, "label column name"}},
        {"dataset.one_hot", {KeyType::Bool, "false", {}, "one-hot encode categorical columns"}},
        {"dataset.data_seed", {KeyType::Int, "0", {}, "generator seed (planted positions, sampling)"}},
        {"dataset.order", {KeyType::Int, "4", {}, "synthetic_3xor planted order"}},
        {"dataset.rows", {KeyType::Int, "2000", {}, "hidden_direction sample count"}},
        {"dataset.dim", {KeyType::Int, "8", {}, "hidden_direction input width"}},
        {"dataset.test_fraction", {KeyType::Real, "0.3", {}, "held-out fraction (stratified)"}},

        {"native.K", {KeyType::Int, "128", {}, "deployed words"}},
        {"native.K_pool", {KeyType::Int, "256", {}, "learnable pool size"}},
        {"native.epochs", {KeyType::Int, "200", {}, "pretrain epochs"}},
        {"native.layers", {KeyType::Int, "8", {}, "ansatz depth L"}},
        {"native.lr", {KeyType::Real, "0.01", {}, "learning rate"}},
        {"native.dw", {KeyType::Real, "5", {}, "diversity weight"}},
        {"native.lambda", {KeyType::Real, "1", {}, "disc weight"}},
        {"native.tau", {KeyType::Real, "1", {}, "participation temperature"}},
        {"native.init", {KeyType::Choice, "random", {"random", "topk"}, "pool initialization"}},
        {"native.normalize_diversity", {KeyType::Bool, "true", {}, "divide diversity by the pair count"}},
        {"native.bandwidth", {KeyType::Real, "0", {}, "MMD bandwidth, 0 = n/4"}},
        {"native.head_epochs", {KeyType::Int, "1000", {}, "linear head epochs"}},
        {"native.head_lr", {KeyType::Real, "0.1", {}, "linear head learning rate (plain gradient descent)"}},
        {"native.head_l2", {KeyType::Real, "0", {}, "linear head L2"}},
        {"native.head_l1", {KeyType::Real, "0.001", {}, "linear head proximal L1"}},

        {"swap.max_order", {KeyType::Int, "3", {}, "restricted D pool order"}},

        {"rank.max_order", {KeyType::Int, "0", {}, "enumeration order, 0 = n"}},
        {"rank.top", {KeyType::Int, "20", {}, "lines printed"}},
        {"rank.alpha", {KeyType::Real, "0", {}, "Bonferroni level, 0 disables"}},

        {"spqc.n_qubits", {KeyType::Int, "14", {}, "qubits"}},
        {"spqc.layers", {KeyType::Int, "6", {}, "ansatz depth L"}},
        {"spqc.K", {KeyType::Int, "128", {}, "words"}},
        {"spqc.alpha", {KeyType::Real, "1", {}, "diversity weight"}},
        {"spqc.beta", {KeyType::Real, "0.01", {}, "sparsity weight"}},
        {"spqc.gamma", {KeyType::Real, "2", {}, "class separation weight"}},
        {"spqc.phase1", {KeyType::Int, "100", {}, "annealing epochs"}},
        {"spqc.phase2", {KeyType::Int, "100", {}, "hard-forward epochs"}},
        {"spqc.tau_start", {KeyType::Real, "1", {}, "temperature at epoch 0"}},
        {"spqc.tau_end", {KeyType::Real, "10", {}, "temperature after annealing"}},
        {"spqc.interpolation", {KeyType::Choice, "geometric", {"geometric", "linear"}, "annealing curve"}},
        {"spqc.lr", {KeyType::Real, "0.01", {}, "learning rate"}},
        {"spqc.weight_decay", {KeyType::Real, "0", {}, "AdamW decay"}},
        {"spqc.batch_size", {KeyType::Int, "64", {}, "minibatch, 0 = full"}},
        {"spqc.normalize_diversity", {KeyType::Bool, "true", {}, "divide diversity by the pair count"}},
        {"spqc.post_selection", {KeyType::Bool, "false", {}, "accepted, no effect"}},
        {"spqc.max_train_rows", {KeyType::Int, "0", {}, "subsample training rows, 0 = all"}},

        {"project.outputs", {KeyType::Int, "14", {}, "projected outputs p"}},
        {"project.bits", {KeyType::Int, "1", {}, "bits per output M"}},
        {"project.K", {KeyType::Int, "32", {}, "words"}},
        {"project.temperature", {KeyType::Real, "1", {}, "soft quantization temperature"}},
        {"project.phase1", {KeyType::Int, "100", {}, "annealing epochs"}},
        {"project.phase2", {KeyType::Int, "100", {}, "hard-forward epochs"}},
        {"project.lr", {KeyType::Real, "0.02", {}, "Adam learning rate"}},
        {"project.baseline", {KeyType::Choice, "sign", {"sign", "median"}, "PCA-bin baseline"}},
        {"project.post_selection", {KeyType::Bool, "false", {}, "accepted, no effect"}},

        {"attack.epsilons", {KeyType::RealList, "0,0.1,0.2,0.3,0.49", {}, "l-inf budgets"}},
        {"attack.defense", {KeyType::Choice, "round", {"round", "none"}, "input rounding before prediction"}},
        {"attack.step", {KeyType::Real, "1", {}, "grid step"}},
        {"attack.model", {KeyType::Choice, "both", {"both", "parity", "linear"}, "models evaluated"}},
    };
    return keys;
}

/// Accepts `key`, `section.key`, or a bare key that is unique across sections.
inline std::string resolve_key(const std::string& section, const std::string& key) {
    const auto& reg = key_registry();
    if (key.find('.') != std::string::npos) {
        if (reg.count(key)) {
            return key;
        }
        throw ConfigError("unknown key '" + key + "'");
    }
    if (!section.empty()) {
        const auto full = section + "." + key;
        if (reg.count(full)) {
            return full;
        }
        throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
    }
    std::string found;
    for (const auto& [name, spec] : reg) {
        if (name.substr(name.find('.') + 1) == key) {
            if (!found.empty()) {
                throw ConfigError("ambiguous key '" + key + "'; qualify it with a section");
            }
            found = name;
        }
    }
    if (found.empty()) {
        throw ConfigError("unknown key '" + key + "'");
    }
    return found;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

inline bool parse_int(const std::string& s, long long& out) {
    if (s.empty()) {
        return false;
    }
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

inline void check_type(const std::string& key, const std::string& value) {
    const auto& spec = key_registry().at(key);
    auto bad = [&](const char* what) {
        throw ConfigError("key '" + key + "' expects " + what + ", got '" + value + "'");
    };
    long long i = 0;
    switch (spec.type) {
    case KeyType::Int:
        if (!parse_int(value, i) || i < 0) {
            bad("a non-negative integer");
        }
        break;
    case KeyType::Real:
        if (!detail::parse_real(value)) {
            bad("a number");
        }
        break;
    case KeyType::Bool:
        if (value != "true" && value != "false") {
            bad("true or false");
        }
        break;
    case KeyType::Choice:
        if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
            bad("one of the documented choices");
        }
        break;
    case KeyType::IntList:
        for (const auto& item : split_list(value)) {
            if (!parse_int(item, i) || i < 0) {
                bad("a comma-separated list of non-negative integers");
            }
        }
        break;
    case KeyType::RealList:
        for (const auto& item : split_list(value)) {
            if (!detail::parse_real(item)) {
                bad("a comma-separated list of numbers");
            }
        }
        break;
    case KeyType::Text:
        break;
    }
}

} // namespace detail

struct RunConfig {
    std::string subcommand;
    std::map<std::string, std::string> values; // every registry key, resolved
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out_dir;
    std::size_t jobs = 1;
    int verbosity = 1;

    [[nodiscard]] const std::string& get(const std::string& key) const {
        auto it = values.find(key);
        if (it == values.end()) {
            throw ConfigError("unknown key '" + key + "'");
        }
        return it->second;
    }
    [[nodiscard]] long long integer(const std::string& key) const { return std::stoll(get(key)); }
    [[nodiscard]] std::size_t size(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
    [[nodiscard]] double real(const std::string& key) const { return *detail::parse_real(get(key)); }
    [[nodiscard]] bool flag(const std::string& key) const { return get(key) == "true"; }
    [[nodiscard]] RealVector reals(const std::string& key) const {
        RealVector v;
        for (const auto& s : detail::split_list(get(key))) {
            v.push_back(*detail::parse_real(s));
        }
        return v;
    }

    /// Sorted key/value echo for result files.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> echo() const {
        return {values.begin(), values.end()};
    }

    /// Exactly one of generator, path, embeddings.
    [[nodiscard]] std::string dataset_source() const {
        int count = 0;
        std::string which;
        for (const char* k : {"dataset.generator", "dataset.path", "dataset.embeddings"}) {
            if (!get(k).empty()) {
                ++count;
                which = k;
            }
        }
        if (count == 0) {
            throw ConfigError("missing dataset source (dataset.generator, dataset.path or dataset.embeddings)");
        }
        if (count > 1) {
            throw ConfigError("more than one dataset source given");
        }
        return which;
    }

    [[nodiscard]] std::string dataset_label() const {
        const auto src = dataset_source();
        if (src == "dataset.generator") {
            return get(src);
        }
        return std::filesystem::path(get(src)).stem().string();
    }
};

/// Parses `key = value` text with optional [section] headers. `#` and `;` start comments.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const auto key = resolve_key(section, detail::trim(line.substr(0, eq)));
        out.emplace_back(key, detail::trim(line.substr(eq + 1)));
    }
    return out;
}

/// Splits `key=value` into (resolved key, value).
inline std::pair<std::string, std::string> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + text + "' is not key=value");
    }
    return {resolve_key("", detail::trim(text.substr(0, eq))), detail::trim(text.substr(eq + 1))};
}

/// Registry defaults, then file entries, then overrides (later wins). The
/// environment variable QPARITY_OUT supplies the output directory when neither
/// the file nor a flag sets run.out.
inline RunConfig parse_config(const std::string& subcommand, const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig rc;
    rc.subcommand = subcommand;
    for (const auto& [k, spec] : key_registry()) {
        rc.values[k] = spec.default_value;
    }
    auto apply = [&](const std::string& key, const std::string& value) {
        detail::check_type(key, value);
        rc.values[key] = value;
    };
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            throw ConfigError("cannot read config file " + file->string());
        }
        for (const auto& [k, v] : parse_config_text(in)) {
            apply(k, v);
        }
    }
    bool out_set = rc.values["run.out"] != "";
    for (const auto& [k, v] : overrides) {
        apply(resolve_key("", k), v);
        out_set = out_set || resolve_key("", k) == "run.out";
    }
    if (!out_set) {
        if (const char* env = std::getenv("QPARITY_OUT"); env && *env) {
            rc.values["run.out"] = env;
        }
    }
    if (rc.values["run.out"].empty()) {
        rc.values["run.out"] = "results";
    }
    rc.out_dir = rc.values["run.out"];
    rc.jobs = std::max<std::size_t>(1, rc.size("run.jobs"));
    rc.verbosity = static_cast<int>(rc.integer("run.verbosity"));
    std::set<std::uint64_t> distinct;
    for (const auto& s : detail::split_list(rc.values["run.seeds"])) {
        rc.seeds.push_back(std::stoull(s));
        if (!distinct.insert(rc.seeds.back()).second) {
            throw ConfigError("seed " + s + " listed twice");
        }
    }
    if (rc.seeds.empty()) {
        throw ConfigError("seed list is empty");
    }
    return rc;
}

// ---------------------------------------------------------------- pipeline configs

inline HeadTrainingConfig head_config(const RunConfig& rc) {
    HeadTrainingConfig h;
    h.epochs = rc.size("native.head_epochs");
    h.optimizer.learning_rate = rc.real("native.head_lr");
    h.l2 = rc.real("native.head_l2");
    h.l1 = rc.real("native.head_l1");
    return h;
}

inline NativeBinaryConfig native_config(const RunConfig& rc) {
    NativeBinaryConfig c;
    c.K = rc.size("native.K");
    c.K_pool = rc.size("native.K_pool");
    c.epochs = rc.size("native.epochs");
    c.layers = rc.size("native.layers");
    c.learning_rate = rc.real("native.lr");
    c.dw = rc.real("native.dw");
    c.lambda = rc.real("native.lambda");
    c.tau = rc.real("native.tau");
    c.init = rc.get("native.init") == "topk" ? PoolInit::TopKClassical : PoolInit::Random;
    c.normalize_diversity = rc.flag("native.normalize_diversity");
    c.mmd.bandwidth = rc.real("native.bandwidth");
    c.head = head_config(rc);
    c.validate();
    return c;
}

inline SwapConfig swap_config(const RunConfig& rc) {
    SwapConfig c;
    c.native = native_config(rc);
    c.restricted_max_order = rc.size("swap.max_order");
    c.test_fraction = rc.real("dataset.test_fraction");
    return c;
}

inline SpqcConfig spqc_config(const RunConfig& rc) {
    SpqcConfig c;
    c.n_qubits = rc.size("spqc.n_qubits");
    c.layers = rc.size("spqc.layers");
    c.K = rc.size("spqc.K");
    c.weights.alpha = rc.real("spqc.alpha");
    c.weights.beta = rc.real("spqc.beta");
    c.weights.gamma = rc.real("spqc.gamma");
    c.schedule.phase1_epochs = rc.size("spqc.phase1");
    c.schedule.phase2_epochs = rc.size("spqc.phase2");
    c.schedule.tau_start = rc.real("spqc.tau_start");
    c.schedule.tau_end = rc.real("spqc.tau_end");
    c.schedule.interpolation =
        rc.get("spqc.interpolation") == "linear" ? Interpolation::Linear : Interpolation::Geometric;
    c.optimizer.learning_rate = rc.real("spqc.lr");
    c.optimizer.weight_decay = rc.real("spqc.weight_decay");
    c.optimizer.horizon = c.schedule.total_epochs();
    c.batch_size = rc.size("spqc.batch_size");
    c.normalize_diversity = rc.flag("spqc.normalize_diversity");
    c.post_selection = rc.flag("spqc.post_selection");
    c.validate();
    return c;
}

inline ProjectionConfig projection_config(const RunConfig& rc) {
    ProjectionConfig c;
    c.outputs = rc.size("project.outputs");
    c.bits_per_output = rc.size("project.bits");
    c.words = rc.size("project.K");
    c.temperature = rc.real("project.temperature");
    c.schedule.phase1_epochs = rc.size("project.phase1");
    c.schedule.phase2_epochs = rc.size("project.phase2");
    c.optimizer.learning_rate = rc.real("project.lr");
    c.optimizer.horizon = c.schedule.total_epochs();
    c.post_selection = rc.flag("project.post_selection");
    return c;
}

inline AttackConfig attack_config(const RunConfig& rc) {
    AttackConfig a;
    a.epsilons = rc.reals("attack.epsilons");
    a.defense = rc.get("attack.defense") == "none" ? Defense::None : Defense::Round;
    a.grid_step = rc.real("attack.step");
    a.validate();
    return a;
}

} // namespace qparity
