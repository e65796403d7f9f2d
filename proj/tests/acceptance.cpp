// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "checks.hpp"
#include "qparity/app.hpp"

using namespace qparity;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
    bool skipped = false;
};

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
    return buf;
}

std::string num(double v, const char* f = "%.3g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome parity5_recovery() {
    const auto ds = generate_planted_parity(parity5_spec(), 0);
    const NativeBinaryConfig cfg; // K 128, pool 256, L 8, lr 0.01, dw 5, 200 epochs
    const auto acc = map_seeds(kDefaultSeeds, 1, [&](std::uint64_t seed) {
        const auto [train, test] = split(ds, 0.3, seed);
        const auto m = train_native_binary(train, cfg, seed);
        return m.failed ? 0.0 : accuracy(m.deployed().predict_all(test.samples), test.labels);
    });
    int perfect = 0;
    std::string per;
    for (double a : acc) {
        perfect += a == 1.0;
        per += " " + pct(a);
    }
    const double mean = summarize(acc).mean;
    return {perfect >= 4 && mean >= 0.99,
            "seeds at 100%: " + std::to_string(perfect) + "/5, mean " + pct(mean) + " (need >=4 and >=99%); per seed" + per};
}

Outcome oracle_ranking() {
    const auto ds = generate_planted_parity(parity5_5_spec(), 0);
    const auto [train, test] = split(ds, 0.3, 42);
    const auto words = enumerate_words(10, 10);
    const auto a = variance_rank(train, words);
    const auto b = variance_rank(train, words);
    const bool same = a.front().word == b.front().word && a.front().score == b.front().score;
    const bool ok = a.front().word.str() == "0111010100" && a.front().score == 1.0 && same;
    return {ok, "rank 1 " + a.front().word.str() + " score " + num(a.front().score, "%.3f") +
                    (a.size() > 1 ? ", rank 2 score " + num(a[1].score, "%.3f") : "")};
}

Outcome swap_separation() {
    const auto ds = generate_planted_parity(synthetic_3xor_spec(0), 0);
    SwapConfig cfg;
    cfg.native.layers = 6;
    cfg.native.dw = 3.0;
    const auto t = run_swap(ds, cfg, kDefaultSeeds);
    const double gap = t.mean[1][0] - t.mean[0][0];
    return {gap >= 0.20, "Q+D " + pct(t.mean[1][0]) + ", D+D " + pct(t.mean[0][0]) + ", gap " +
                             num(100.0 * gap, "%.1f") + " points (need >=20); D+Q " + pct(t.mean[0][1]) + ", Q+Q " +
                             pct(t.mean[1][1])};
}

Outcome moment_equivalence() {
    const auto bad = checks::moment_equivalence_violations(1000, 4);
    return {bad == 0, std::to_string(bad) + " bitwise mismatches over 1000 random datasets/word sets"};
}

Outcome rounding_robustness() {
    const auto s = checks::rounding_exactness(10000, 5);
    return {s.trials == 10000 && s.input_violations == 0 && s.prediction_violations == 0,
            std::to_string(s.trials) + " triples, " + std::to_string(s.input_violations) + " input and " +
                std::to_string(s.prediction_violations) + " prediction violations"};
}

Outcome simulator_correctness() {
    const auto parity = checks::basis_parity_violations(1000, 6);
    const auto g = checks::shift_rule_vs_fd(1000, 6, 1e-5);
    return {parity == 0 && g.trials == 1000 && g.violations == 0,
            "basis parity mismatches " + std::to_string(parity) + "/1000; shift-rule vs FD violations " +
                std::to_string(g.violations) + "/" + std::to_string(g.trials) + ", worst rel err " + num(g.worst)};
}

Outcome soft_hard_consistency() {
    const double gap = checks::saturated_soft_hard_gap(50, 7);
    return {gap <= 1e-6, "max |soft - hard| over n<=8 exhaustive = " + num(gap) + " (tol 1e-6)"};
}

Outcome mushroom() {
    const char* path = std::getenv("QPARITY_MUSHROOM_CSV");
    if (!path || !*path) {
        return {true, "mushroom CSV not available (set QPARITY_MUSHROOM_CSV); run acceptance_mushroom", true};
    }
    return {true, "run acceptance_mushroom for this criterion", true};
}

Outcome projection_directionality() {
    const auto ds = generate_hidden_direction(2000, 8, 0);
    ProjectionConfig cfg;
    cfg.outputs = 4;
    RealVector learned, base;
    for (std::uint64_t seed : {42, 123, 456}) {
        const auto [train, test] = split(ds, 0.3, seed);
        learned.push_back(train_projection_pipeline(train, cfg, seed).evaluate(test));
        base.push_back(app::pca_bin_baseline(train, test, cfg.outputs, 1, BinarizeMode::Sign));
    }
    const double gap = summarize(learned).mean - summarize(base).mean;
    return {gap >= 0.10, "learned " + pct(summarize(learned).mean) + " vs PCA-bin " + pct(summarize(base).mean) +
                             ", gap " + num(100.0 * gap, "%.1f") + " points over 3 seeds (need >=10)"};
}

Outcome loss_units() {
    bool ok = true;
    std::string detail;
    for (const auto& u : checks::loss_units()) {
        ok = ok && u.ok();
        detail += (detail.empty() ? "" : "; ") + u.name + " = " + num(u.value, "%.12g");
    }
    return {ok, detail};
}

} // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"parity5 recovery", parity5_recovery},
        {"oracle word ranking", oracle_ranking},
        {"swap separation", swap_separation},
        {"moment equivalence at L=0", moment_equivalence},
        {"exact rounding robustness", rounding_robustness},
        {"simulator correctness", simulator_correctness},
        {"soft/hard consistency", soft_hard_consistency},
        {"sPQC mushroom (extended)", mushroom},
        {"projection directionality", projection_directionality},
        {"loss-term units", loss_units},
    };
    int failures = 0;
    int index = 0;
    for (const auto& [name, fn] : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* verdict = o.skipped ? "SKIP" : (o.pass ? "PASS" : "FAIL");
        std::printf("criterion %d: %s  %s: %s [%.1fs]\n", index, verdict, name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
