#pragma once

// Subcommand implementations behind the `qparity` tool. run_cli is callable
// in-process so tests can drive it with captured streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qparity/config.hpp"
#include "qparity/results.hpp"

namespace qparity {

namespace app {

namespace fs = std::filesystem;

struct Io {
    std::ostream& out;
    std::ostream& err;
    int verbosity = 1;

    void log(const std::string& msg) const {
        if (verbosity > 0) {
            err << msg << '\n';
        }
    }
};

inline LabeledBitDataset load_bits(const RunConfig& rc) {
    const auto src = rc.dataset_source();
    if (src == "dataset.generator") {
        const auto& g = rc.get(src);
        const auto data_seed = static_cast<std::uint64_t>(rc.integer("dataset.data_seed"));
        if (g == "parity5") {
            return generate_planted_parity(parity5_spec(), data_seed);
        }
        if (g == "parity5_5") {
            return generate_planted_parity(parity5_5_spec(), data_seed);
        }
        if (g == "hidden_direction") {
            throw ConfigError("hidden_direction is continuous; use spqc or project");
        }
        return generate_planted_parity(synthetic_3xor_spec(data_seed, 10, rc.size("dataset.order")), data_seed);
    }
    if (src == "dataset.embeddings") {
        throw ConfigError("this subcommand needs a bit dataset, not embeddings");
    }
    return load_bit_dataset(rc.get(src), {rc.get("dataset.label_column"), rc.flag("dataset.one_hot")});
}

inline ContinuousDataset load_real(const RunConfig& rc) {
    const auto src = rc.dataset_source();
    if (src == "dataset.embeddings") {
        return load_f32_embeddings(rc.get(src));
    }
    if (src == "dataset.generator" && rc.get(src) == "hidden_direction") {
        return generate_hidden_direction(rc.size("dataset.rows"), rc.size("dataset.dim"),
                                         static_cast<std::uint64_t>(rc.integer("dataset.data_seed")));
    }
    if (src == "dataset.path" && !rc.flag("dataset.one_hot")) {
        return to_continuous(read_table(fs::path(rc.get(src))), rc.get("dataset.label_column"));
    }
    return to_real_dataset(load_bits(rc));
}

inline ExperimentResult new_result(const RunConfig& rc, const std::string& pipeline) {
    ExperimentResult r;
    r.pipeline = pipeline;
    r.dataset = rc.dataset_label();
    r.seeds = rc.seeds;
    r.config = rc.echo();
    return r;
}

inline void record_head(ExperimentResult& r, const std::vector<ParityWord>& words, const LinearHead& head) {
    std::vector<std::string> ws;
    for (const auto& w : words) {
        ws.push_back(w.str());
    }
    r.words.push_back(ws);
    r.head_weights.push_back(head.weights);
    r.head_bias.push_back(head.bias);
}

inline fs::path write_result(const RunConfig& rc, const std::string& stem, const ExperimentResult& r,
                             const Series& series = {}) {
    const auto path = rc.out_dir / (stem + ".json");
    write_atomic(path, result_to_json(r, series).dump(2) + "\n");
    return path;
}

// ---------------------------------------------------------------- subcommands

inline int gen_data(const RunConfig& rc, const Io& io) {
    const auto ds = load_bits(rc);
    std::ostringstream text;
    write_bit_dataset_csv(ds, text);
    const auto path = rc.out_dir / (rc.dataset_label() + ".csv");
    write_atomic(path, text.str());
    io.out << path.string() << ' ' << ds.size() << " rows\n";
    return 0;
}

inline int rank_words(const RunConfig& rc, const Io& io) {
    const auto ds = load_bits(rc);
    const auto [train, test] = split(ds, rc.real("dataset.test_fraction"), rc.seeds.front());
    const std::size_t order = rc.size("rank.max_order") == 0 ? ds.n : rc.size("rank.max_order");
    const double alpha = rc.real("rank.alpha");
    std::ostringstream text;
    char buf[64];
    if (alpha > 0.0) {
        for (const auto& s : bonferroni_select_scored(train, order, alpha)) {
            std::snprintf(buf, sizeof buf, " %.3e", s.p_value);
            text << s.word.str() << buf << '\n';
        }
    } else {
        const auto ranked = variance_rank(train, enumerate_words(ds.n, order));
        for (std::size_t i = 0; i < std::min(rc.size("rank.top"), ranked.size()); ++i) {
            std::snprintf(buf, sizeof buf, " %.3f", ranked[i].score);
            text << ranked[i].word.str() << buf << '\n';
        }
    }
    io.out << text.str();
    write_atomic(rc.out_dir / ("rank_" + rc.dataset_label() + ".txt"), text.str());
    return 0;
}

inline int train_native(const RunConfig& rc, const Io& io) {
    const auto ds = load_bits(rc);
    const auto cfg = native_config(rc);
    const double frac = rc.real("dataset.test_fraction");
    struct Run {
        NativeBinaryModel model;
        double acc;
    };
    const auto runs = map_seeds(rc.seeds, rc.jobs, [&](std::uint64_t seed) {
        const auto [train, test] = split(ds, frac, seed);
        auto m = train_native_binary(train, cfg, seed);
        const double acc = m.failed ? 0.0 : accuracy(m.deployed().predict_all(test.samples), test.labels);
        return Run{std::move(m), acc};
    });
    auto r = new_result(rc, "train-native");
    r.notes.push_back("deployment: Q-discovered words with classical data moments (Q+D)");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& m = runs[i].model;
        r.accuracies.push_back(runs[i].acc);
        record_head(r, m.words, m.head);
        for (const auto& w : m.warnings) {
            r.warnings.push_back("seed " + std::to_string(rc.seeds[i]) + ": " + w);
        }
        if (!m.failed) {
            std::ostringstream clf;
            m.deployed().save(clf);
            write_atomic(rc.out_dir / ("native_" + r.dataset + "_s" + std::to_string(rc.seeds[i]) + ".clf"),
                         clf.str());
        }
        io.log("seed " + std::to_string(rc.seeds[i]) + ": test accuracy " + fmt1(100.0 * runs[i].acc));
    }
    r.finalize();
    const auto path = write_result(rc, "native_" + r.dataset, r);
    io.out << render_report({{r.dataset, {r, {}}}});
    io.log("wrote " + path.string());
    return 0;
}

inline int swap(const RunConfig& rc, const Io& io) {
    const auto ds = load_bits(rc);
    const auto cfg = swap_config(rc);
    const auto table = run_swap(ds, cfg, rc.seeds, rc.jobs);
    auto r = new_result(rc, "swap");
    r.notes.push_back("Q moments: per-example basis-state encoding |b> -> U(theta) -> <Z^s>");
    r.notes.push_back("D basis: top-K variance-ranked words from a random order<=" +
                      std::to_string(cfg.restricted_max_order) + " pool");
    Series series;
    const char* names[2][2] = {{"D+D", "D+Q"}, {"Q+D", "Q+Q"}};
    for (int b = 0; b < 2; ++b) {
        for (int m = 0; m < 2; ++m) {
            RealVector v;
            for (const auto& s : table.per_seed) {
                v.push_back(s.acc[b][m]);
            }
            series.emplace_back(names[b][m], v);
        }
    }
    for (const auto& s : table.per_seed) {
        r.accuracies.push_back(s.acc[1][0]);
        std::vector<std::string> ws;
        for (const auto& w : s.q_words) {
            ws.push_back(w.str());
        }
        r.words.push_back(ws);
    }
    r.finalize();
    write_result(rc, "swap_" + r.dataset, r, series);
    io.out << "basis\\moments      D      Q\n";
    io.out << "D              " << std::setw(6) << fmt1(100 * table.mean[0][0]) << ' ' << std::setw(6)
           << fmt1(100 * table.mean[0][1]) << '\n';
    io.out << "Q              " << std::setw(6) << fmt1(100 * table.mean[1][0]) << ' ' << std::setw(6)
           << fmt1(100 * table.mean[1][1]) << '\n';
    return 0;
}

/// Train/test pair for sPQC: one-hot fitted on the training rows only.
inline std::pair<ContinuousDataset, ContinuousDataset> spqc_data(const RunConfig& rc, std::uint64_t seed) {
    const double frac = rc.real("dataset.test_fraction");
    if (rc.dataset_source() == "dataset.path" && rc.flag("dataset.one_hot")) {
        const auto cat = to_categorical(read_table(fs::path(rc.get("dataset.path"))), rc.get("dataset.label_column"));
        const auto [tr, te] = split(cat, frac, seed);
        const auto enc = OneHotEncoder::fit(tr);
        return {to_real_dataset(enc.transform(tr)), to_real_dataset(enc.transform(te))};
    }
    const auto ds = load_real(rc);
    return split(ds, frac, seed);
}

inline ContinuousDataset subsample(const ContinuousDataset& ds, std::size_t rows, std::uint64_t seed) {
    if (rows == 0 || rows >= ds.size()) {
        return ds;
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, 0x5ab5);
    shuffle(idx, rng);
    idx.resize(rows);
    std::sort(idx.begin(), idx.end());
    return ds.subset(idx);
}

inline int spqc(const RunConfig& rc, const Io& io) {
    const auto cfg = spqc_config(rc);
    struct Run {
        SpqcModel model;
        double acc;
    };
    const auto runs = map_seeds(rc.seeds, rc.jobs, [&](std::uint64_t seed) {
        auto [train, test] = spqc_data(rc, seed);
        train = subsample(train, rc.size("spqc.max_train_rows"), seed);
        auto m = train_spqc(train, cfg, seed);
        const double acc = m.evaluate(test);
        return Run{std::move(m), acc};
    });
    auto r = new_result(rc, "spqc");
    if (cfg.post_selection) {
        r.notes.push_back("post_selection requested; it has no effect");
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        r.accuracies.push_back(runs[i].acc);
        record_head(r, runs[i].model.words, runs[i].model.head);
        for (const auto& w : runs[i].model.warnings) {
            r.warnings.push_back("seed " + std::to_string(rc.seeds[i]) + ": " + w);
        }
        io.log("seed " + std::to_string(rc.seeds[i]) + ": test accuracy " + fmt1(100.0 * runs[i].acc));
    }
    r.finalize();
    write_result(rc, "spqc_" + r.dataset, r);
    io.out << render_report({{r.dataset, {r, {}}}});
    return 0;
}

/// PCA(p) + fixed binarization + logistic regression on the bits.
inline double pca_bin_baseline(const ContinuousDataset& train, const ContinuousDataset& test, std::size_t p,
                               std::size_t bits, BinarizeMode mode) {
    const auto pca = fit_pca(train.samples, std::min(p, train.d));
    const auto ztr = apply_pca(pca, train);
    const auto zte = apply_pca(pca, test);
    const auto bin = fit_binarizer(ztr.samples, mode, bits);
    const auto btr = binarize(bin, ztr);
    const auto bte = binarize(bin, zte);
    const auto head =
        train_logistic_baseline(bits_to_matrix(btr.samples, btr.n), btr.labels, btr.num_classes);
    return accuracy(head.predict_all(bits_to_matrix(bte.samples, bte.n)), bte.labels);
}

inline int project(const RunConfig& rc, const Io& io) {
    const auto ds = load_real(rc);
    const auto cfg = projection_config(rc);
    const auto mode = rc.get("project.baseline") == "median" ? BinarizeMode::Median : BinarizeMode::Sign;
    struct Run {
        ProjectionModel model;
        double acc, baseline;
    };
    const auto runs = map_seeds(rc.seeds, rc.jobs, [&](std::uint64_t seed) {
        const auto [train, test] = split(ds, rc.real("dataset.test_fraction"), seed);
        auto m = train_projection_pipeline(train, cfg, seed);
        const double acc = m.evaluate(test);
        const double base = pca_bin_baseline(train, test, cfg.outputs, cfg.bits_per_output, mode);
        return Run{std::move(m), acc, base};
    });
    auto r = new_result(rc, "project");
    if (cfg.post_selection) {
        r.notes.push_back("post_selection requested; it has no effect");
    }
    RealVector base;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        r.accuracies.push_back(runs[i].acc);
        base.push_back(runs[i].baseline);
        record_head(r, runs[i].model.words, runs[i].model.head);
    }
    r.finalize();
    const Series series{{"pca_bin", base}};
    write_result(rc, "project_" + r.dataset, r, series);
    io.out << render_report({{r.dataset, {r, series}}});
    return 0;
}

/// Logits of the pool row that produced each deployed word.
inline WordLogits deployed_logits(const NativeBinaryModel& m) {
    WordLogits wl;
    wl.logits = Matrix(m.words.size(), m.logits.width());
    for (std::size_t k = 0; k < m.words.size(); ++k) {
        for (std::size_t r = 0; r < m.logits.pool_size(); ++r) {
            if (threshold_row(m.logits.logits.row(r)) == m.words[k]) {
                auto src = m.logits.logits.row(r);
                std::copy(src.begin(), src.end(), wl.logits.row(k).begin());
                break;
            }
        }
    }
    return wl;
}

inline int robustness(const RunConfig& rc, const Io& io) {
    const auto ds = load_bits(rc);
    const auto cfg = native_config(rc);
    const auto atk = attack_config(rc);
    const auto which = rc.get("attack.model");
    struct Run {
        std::vector<RobustnessPoint> parity, linear;
        double parity_clean = 0.0, linear_clean = 0.0;
    };
    const auto runs = map_seeds(rc.seeds, rc.jobs, [&](std::uint64_t seed) {
        const auto [train, test] = split(ds, rc.real("dataset.test_fraction"), seed);
        Run run;
        if (which != "linear") {
            const auto m = train_native_binary(train, cfg, seed);
            auto clf = m.deployed();
            const auto wl = deployed_logits(m);
            const auto sur = parity_surrogate(clf.words, clf.head, &wl);
            RealPredictor pred = [clf](std::span<const double> x) { return clf.predict_real(x); };
            run.parity = robustness_curve(pred, sur, test, atk);
            run.parity_clean = accuracy(clf.predict_all(test.samples), test.labels);
        }
        if (which != "parity") {
            const auto head = train_logistic_baseline(bits_to_matrix(train.samples, train.n), train.labels,
                                                      train.num_classes, cfg.head);
            RealPredictor pred = [head](std::span<const double> x) { return head.predict(x); };
            run.linear = robustness_curve(pred, linear_surrogate(head), test, atk);
            run.linear_clean = accuracy(head.predict_all(bits_to_matrix(test.samples, test.n)), test.labels);
        }
        return run;
    });
    auto emit = [&](const std::string& name, auto member, auto clean) {
        std::vector<std::vector<RobustnessPoint>> curves;
        auto r = new_result(rc, "robustness-" + name);
        r.notes.push_back("FGSM surrogate: " + std::string(name == "parity" ? "soft parity at trained logits, temperature 1"
                                                                            : "cross-entropy of the linear model"));
        for (const auto& run : runs) {
            curves.push_back(run.*member);
            r.accuracies.push_back(run.*clean);
        }
        r.finalize();
        const auto rows = aggregate_curves(curves);
        std::ostringstream csv;
        write_robustness_csv(csv, rows);
        write_atomic(rc.out_dir / ("robustness_" + name + "_" + r.dataset + ".csv"), csv.str());
        write_result(rc, "robustness_" + name + "_" + r.dataset, r);
        io.out << name << '\n' << csv.str();
    };
    if (which != "linear") {
        emit("parity", &Run::parity, &Run::parity_clean);
    }
    if (which != "parity") {
        emit("linear", &Run::linear, &Run::linear_clean);
    }
    return 0;
}

inline int report(const std::vector<std::string>& files, const Io& io) {
    std::vector<std::pair<std::string, LoadedResult>> loaded;
    std::vector<fs::path> paths;
    for (const auto& f : files) {
        if (fs::is_directory(f)) {
            for (const auto& e : fs::directory_iterator(f)) {
                if (e.path().extension() == ".json") {
                    paths.push_back(e.path());
                }
            }
        } else {
            paths.emplace_back(f);
        }
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream in(p);
        if (!in) {
            throw ConfigError("cannot read " + p.string());
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(p.string() + ": " + e.what());
        }
        auto lr = result_from_json(j);
        loaded.emplace_back(lr.result.pipeline + " " + lr.result.dataset, std::move(lr));
    }
    if (loaded.empty()) {
        throw ConfigError("report: no result files given");
    }
    io.out << render_report(loaded);
    return 0;
}

} // namespace app

inline bool is_validation_error(const std::exception& e) {
    return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
           dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
           dynamic_cast<const FitError*>(&e) || dynamic_cast<const CapacityError*>(&e);
}

/// Exit codes: 0 success, 1 validation error, 2 runtime failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App cli{"qparity: parity-word discovery, deployment and robustness experiments"};
    cli.require_subcommand(1);
    std::string config_file, seeds, out_dir, dataset;
    std::size_t jobs = 0;
    int verbosity = -1;
    std::vector<std::string> sets;
    std::vector<std::string> report_files;
    bool version = false;
    cli.add_flag("--version", version, "print artifact and format versions");
    const char* names[] = {"gen-data", "rank-words", "train-native", "swap", "spqc", "project", "robustness", "report"};
    const char* help[] = {"write a generated dataset as CSV",
                          "rank parity words by class-mean variance (or Bonferroni selection)",
                          "learn parity words and a linear head per seed",
                          "2x2 basis/moment swap table",
                          "train sPQC-Parity on a discrete dataset",
                          "learned projection encoder vs PCA-bin baseline",
                          "FGSM curves with and without the rounding defense",
                          "render stored JSON results as tables"};
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(names); ++i) {
        auto* s = cli.add_subcommand(names[i], help[i]);
        s->add_option("--config", config_file, "config file (key = value with [sections])");
        s->add_option("--seeds,--seed", seeds, "comma-separated seed list");
        s->add_option("--out", out_dir, "output directory");
        s->add_option("--jobs", jobs, "concurrent seed runs");
        s->add_option("--dataset", dataset, "generator name or data file");
        s->add_option("-D,--set", sets, "override key=value (section.key or unique key)");
        s->add_option("-v,--verbosity", verbosity, "0 quiet, 1 normal, 2 chatty");
        subs.push_back(s);
    }
    subs.back()->add_option("files", report_files, "result JSON files or directories");
    // --version works without a subcommand
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--version") {
            out << "qparity " << kVersion << " (results " << kResultFormat << ", classifier parity-clf "
                << kDeployedFormatVersion << ")\n";
            return 0;
        }
    }
    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << cli.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << cli.help();
            return 0;
        }
        err << "error: " << e.what() << '\n';
        return 1;
    }
    std::string sub;
    for (auto* s : subs) {
        if (s->parsed()) {
            sub = s->get_name();
        }
    }
    try {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& s : sets) {
            overrides.push_back(parse_override(s));
        }
        if (!seeds.empty()) {
            overrides.emplace_back("run.seeds", seeds);
        }
        if (!out_dir.empty()) {
            overrides.emplace_back("run.out", out_dir);
        }
        if (jobs > 0) {
            overrides.emplace_back("run.jobs", std::to_string(jobs));
        }
        if (verbosity >= 0) {
            overrides.emplace_back("run.verbosity", std::to_string(verbosity));
        }
        if (!dataset.empty()) {
            const auto& gens = key_registry().at("dataset.generator").choices;
            if (std::find(gens.begin(), gens.end(), dataset) != gens.end()) {
                overrides.emplace_back("dataset.generator", dataset);
            } else if (std::filesystem::path(dataset).extension() == ".json" ||
                       std::filesystem::path(dataset).extension() == ".meta") {
                overrides.emplace_back("dataset.embeddings", dataset);
            } else {
                overrides.emplace_back("dataset.path", dataset);
            }
        }
        const auto rc = parse_config(
            sub, config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_file), overrides);
        const app::Io io{out, err, rc.verbosity};
        if (sub == "gen-data") {
            return app::gen_data(rc, io);
        }
        if (sub == "rank-words") {
            return app::rank_words(rc, io);
        }
        if (sub == "train-native") {
            return app::train_native(rc, io);
        }
        if (sub == "swap") {
            return app::swap(rc, io);
        }
        if (sub == "spqc") {
            return app::spqc(rc, io);
        }
        if (sub == "project") {
            return app::project(rc, io);
        }
        if (sub == "robustness") {
            return app::robustness(rc, io);
        }
        return app::report(report_files, io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return is_validation_error(e) ? 1 : 2;
    }
}

} // namespace qparity
