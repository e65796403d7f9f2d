#include <gtest/gtest.h>

#include "checks.hpp"
#include "oracle.hpp"
#include "qparity/losses.hpp"

using namespace qparity;

namespace {

std::vector<double> flat(const Matrix& m) { return m.data(); }

Matrix reshape(const std::vector<double>& v, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    std::copy(v.begin(), v.end(), m.data().begin());
    return m;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
    Matrix m(r, c);
    for (auto& v : m.data()) {
        v = normal(rng, 0.0, scale);
    }
    return m;
}

// literal definitions, written independently of the library kernels
double oracle_disc(const Matrix& mu) {
    const auto C = static_cast<double>(mu.rows());
    double total = 0.0;
    for (std::size_t k = 0; k < mu.cols(); ++k) {
        double mean = 0.0;
        for (std::size_t c = 0; c < mu.rows(); ++c) {
            mean += mu(c, k) / C;
        }
        for (std::size_t c = 0; c < mu.rows(); ++c) {
            total += (mu(c, k) - mean) * (mu(c, k) - mean) / C;
        }
    }
    return total / static_cast<double>(mu.cols());
}

double oracle_div(const Matrix& l, double tau) {
    double v = 0.0;
    for (std::size_t a = 0; a < l.rows(); ++a) {
        for (std::size_t b = 0; b < l.rows(); ++b) {
            if (a == b) {
                continue;
            }
            double dot = 0.0;
            for (std::size_t i = 0; i < l.cols(); ++i) {
                dot += oracle::sigmoid(tau * l(a, i)) * oracle::sigmoid(tau * l(b, i));
            }
            v += std::abs(dot);
        }
    }
    return v;
}

double oracle_sep(const Matrix& f, const std::vector<int>& y, int C) {
    std::vector<std::vector<double>> mu(C, std::vector<double>(f.cols(), 0.0));
    std::vector<int> cnt(C, 0);
    for (std::size_t j = 0; j < f.rows(); ++j) {
        ++cnt[y[j]];
        for (std::size_t k = 0; k < f.cols(); ++k) {
            mu[y[j]][k] += f(j, k);
        }
    }
    double v = 0.0;
    int pairs = 0;
    for (int a = 0; a < C; ++a) {
        for (int b = a + 1; b < C; ++b) {
            if (!cnt[a] || !cnt[b]) {
                continue;
            }
            ++pairs;
            for (std::size_t k = 0; k < f.cols(); ++k) {
                const double d = mu[a][k] / cnt[a] - mu[b][k] / cnt[b];
                v += d * d;
            }
        }
    }
    return -v / pairs;
}

} // namespace

TEST(Mmd, Examples) {
    RealVector p{0, 1, 0, 0}; // |10> in little-endian: bit 0 set
    RealVector q{0, 0, 0, 1};
    EXPECT_NEAR(mmd_squared(p, q, 2, 1.0), 2.0 * (1.0 - std::exp(-1.0)), 1e-12);
    EXPECT_LE(mmd_squared(p, p, 2, 1.0), 1e-12);
}

TEST(Mmd, MatchesGramMatrixOracleAndIsSymmetric) {
    Rng rng = make_rng(21);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + uniform_index(rng, 7);
        RealVector p(std::size_t{1} << n), q(p.size());
        double zp = 0, zq = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            zp += p[i] = uniform01(rng);
            zq += q[i] = uniform01(rng);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] /= zp;
            q[i] /= zq;
        }
        const double h = 0.3 + 2.0 * uniform01(rng);
        const double v = mmd_squared(p, q, n, h);
        EXPECT_NEAR(v, oracle::mmd(p, q, n, h), 1e-12);
        EXPECT_NEAR(v, mmd_squared(q, p, n, h), 1e-14);
        EXPECT_GE(v, 0.0);
    }
}

TEST(Mmd, DatasetAndSampledForms) {
    const auto ds = generate_planted_parity(parity5_spec(), 0);
    const auto q = empirical_distribution(ds.samples, 5);
    EXPECT_LE(mmd_loss(q, ds, MmdConfig{}), 1e-12);
    EXPECT_LE(mmd_loss(ds.samples, ds, MmdConfig{}), 1e-12);
    LabeledBitDataset empty{5, {}, {}, 2};
    EXPECT_ANY_THROW(mmd_loss(q, empty, MmdConfig{}));
}

TEST(Disc, Examples) {
    Matrix eq(2, 2);
    eq(0, 0) = eq(1, 0) = 0.3;
    EXPECT_EQ(disc_loss(eq), 0.0);
    Matrix pm(2, 1);
    pm(0, 0) = 1;
    pm(1, 0) = -1;
    EXPECT_DOUBLE_EQ(disc_loss(pm), 1.0);
    Matrix with_const(2, 2);
    with_const(0, 0) = 1;
    with_const(1, 0) = -1;
    with_const(0, 1) = with_const(1, 1) = 1;
    EXPECT_DOUBLE_EQ(disc_loss(with_const), 0.5);
    EXPECT_ANY_THROW(disc_loss(Matrix(1, 3)));
}

TEST(Diversity, Examples) {
    WordLogits one{Matrix(1, 4), 1.0};
    EXPECT_EQ(diversity_penalty(one), 0.0);
    WordLogits twins{Matrix(2, 3), 1.0};
    for (std::size_t k = 0; k < 2; ++k) {
        twins.logits(k, 0) = 100;
        twins.logits(k, 1) = twins.logits(k, 2) = -100;
    }
    EXPECT_NEAR(diversity_penalty(twins), 2.0, 1e-12);
    WordLogits disjoint{Matrix(2, 2), 1.0};
    disjoint.logits(0, 0) = disjoint.logits(1, 1) = 100;
    disjoint.logits(0, 1) = disjoint.logits(1, 0) = -100;
    EXPECT_NEAR(diversity_penalty(disjoint), 0.0, 1e-12);
}

TEST(Sparsity, Examples) {
    WordLogits off{Matrix(3, 4), 1.0};
    for (auto& v : off.logits.data()) {
        v = -100;
    }
    EXPECT_NEAR(sparsity_penalty(off), 0.0, 1e-12);
    WordLogits zero{Matrix(3, 4), 1.0};
    EXPECT_DOUBLE_EQ(sparsity_penalty(zero), 6.0);
    off.logits(1, 2) = 100;
    EXPECT_NEAR(sparsity_penalty(off), 1.0, 1e-12);
}

TEST(ClassSeparation, Examples) {
    Matrix same(4, 2);
    const std::vector<int> y{0, 1, 0, 1};
    EXPECT_EQ(class_separation_penalty(same, y, 2), 0.0);
    Matrix pm(2, 1);
    pm(0, 0) = 1;
    pm(1, 0) = -1;
    EXPECT_DOUBLE_EQ(class_separation_penalty(pm, std::vector<int>{0, 1}, 2), -4.0);
    // class means (0), (2), (2): squared distances 4, 4, 0
    Matrix three(3, 1);
    three(1, 0) = 2;
    three(2, 0) = 2;
    EXPECT_DOUBLE_EQ(class_separation_penalty(three, std::vector<int>{0, 1, 2}, 3), -8.0 / 3.0);
    EXPECT_ANY_THROW(class_separation_penalty(pm, std::vector<int>{0, 0}, 2));
}

TEST(CrossEntropy, Examples) {
    Matrix uniform(3, 2);
    EXPECT_NEAR(cross_entropy(uniform, std::vector<int>{0, 1, 1}), std::log(2.0), 1e-10);
    Matrix confident(1, 3);
    confident(0, 1) = 50;
    EXPECT_NEAR(cross_entropy(confident, std::vector<int>{1}), 0.0, 1e-12);
    Rng rng = make_rng(22);
    for (int t = 0; t < 200; ++t) {
        const std::size_t C = 2 + uniform_index(rng, 4);
        const auto l = random_matrix(rng, 5, C, 3.0);
        std::vector<int> y;
        double brute = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            y.push_back(static_cast<int>(uniform_index(rng, C)));
            auto r = l.row(j);
            brute += oracle::log_softmax_nll({r.begin(), r.end()}, y.back()) / 5.0;
        }
        EXPECT_NEAR(cross_entropy(l, y), brute, 1e-10);
    }
}

TEST(LossGradients, MatchFiniteDifferencesOnRandomConfigurations) {
    Rng rng = make_rng(23);
    std::size_t checked = 0;
    const int per_term = 200;
    for (int t = 0; t < per_term; ++t) {
        // disc over class means
        {
            const std::size_t C = 2 + uniform_index(rng, 3), K = 1 + uniform_index(rng, 5);
            const auto mu = random_matrix(rng, C, K, 1.0);
            Matrix g;
            const double v = disc_loss(mu, &g);
            ASSERT_NEAR(v, oracle_disc(mu), 1e-12);
            const auto fd = oracle::fd_grad([&](const std::vector<double>& x) { return oracle_disc(reshape(x, C, K)); },
                                            flat(mu));
            ASSERT_LE(oracle::rel_err(flat(g), fd), 1e-5);
            ++checked;
        }
        // diversity, raw and normalised
        for (bool norm : {false, true}) {
            const std::size_t K = 1 + uniform_index(rng, 5), n = 1 + uniform_index(rng, 6);
            const double tau = 0.5 + 2.0 * uniform01(rng);
            WordLogits wl{random_matrix(rng, K, n, 2.0), tau};
            Matrix g;
            const double v = diversity_penalty(wl, &g, norm);
            const double scale = (norm && K > 1) ? 1.0 / static_cast<double>(K * (K - 1)) : 1.0;
            ASSERT_NEAR(v, scale * oracle_div(wl.logits, tau), 1e-10);
            ASSERT_GE(v, 0.0);
            const auto fd = oracle::fd_grad(
                [&](const std::vector<double>& x) { return scale * oracle_div(reshape(x, K, n), tau); },
                flat(wl.logits));
            ASSERT_LE(oracle::rel_err(flat(g), fd), 1e-5);
            ++checked;
        }
        // sparsity
        {
            const std::size_t K = 1 + uniform_index(rng, 5), n = 1 + uniform_index(rng, 6);
            const double tau = 0.5 + 2.0 * uniform01(rng);
            WordLogits wl{random_matrix(rng, K, n, 2.0), tau};
            Matrix g;
            ASSERT_GE(sparsity_penalty(wl, &g), 0.0);
            const auto fd = oracle::fd_grad(
                [&](const std::vector<double>& x) {
                    double s = 0;
                    for (double v : x) {
                        s += oracle::sigmoid(tau * v);
                    }
                    return s;
                },
                flat(wl.logits));
            ASSERT_LE(oracle::rel_err(flat(g), fd), 1e-5);
            ++checked;
        }
        // class separation
        {
            const int C = 2 + static_cast<int>(uniform_index(rng, 3));
            const std::size_t N = 6 + uniform_index(rng, 6), K = 1 + uniform_index(rng, 4);
            const auto f = random_matrix(rng, N, K, 1.0);
            std::vector<int> y;
            for (std::size_t j = 0; j < N; ++j) {
                y.push_back(static_cast<int>(j % static_cast<std::size_t>(C)));
            }
            Matrix g;
            const double v = class_separation_penalty(f, y, C, &g);
            ASSERT_NEAR(v, oracle_sep(f, y, C), 1e-12);
            ASSERT_LE(v, 0.0);
            const auto fd =
                oracle::fd_grad([&](const std::vector<double>& x) { return oracle_sep(reshape(x, N, K), y, C); }, flat(f));
            ASSERT_LE(oracle::rel_err(flat(g), fd), 1e-5);
            ++checked;
        }
        // cross-entropy
        {
            const std::size_t N = 1 + uniform_index(rng, 6), C = 2 + uniform_index(rng, 3);
            const auto l = random_matrix(rng, N, C, 2.0);
            std::vector<int> y;
            for (std::size_t j = 0; j < N; ++j) {
                y.push_back(static_cast<int>(uniform_index(rng, C)));
            }
            Matrix g;
            cross_entropy(l, y, &g);
            const auto fd = oracle::fd_grad(
                [&](const std::vector<double>& x) {
                    double s = 0;
                    for (std::size_t j = 0; j < N; ++j) {
                        s += oracle::log_softmax_nll({x.begin() + j * C, x.begin() + (j + 1) * C}, y[j]);
                    }
                    return s / static_cast<double>(N);
                },
                flat(l));
            ASSERT_LE(oracle::rel_err(flat(g), fd), 1e-5);
            ++checked;
        }
        // MMD with respect to the model distribution
        {
            const std::size_t n = 1 + uniform_index(rng, 5);
            RealVector p(std::size_t{1} << n), q(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
                p[i] = uniform01(rng);
                q[i] = uniform01(rng);
            }
            const double h = 0.5 + uniform01(rng);
            RealVector g;
            mmd_squared(p, q, n, h, &g);
            const auto fd = oracle::fd_grad([&](const std::vector<double>& x) { return oracle::mmd(x, q, n, h); }, p);
            ASSERT_LE(oracle::rel_err(g, fd), 1e-5);
            ++checked;
        }
    }
    EXPECT_GE(checked, 1000u);
}

TEST(LossUnits, ClosedFormValues) {
    for (const auto& u : checks::loss_units()) {
        EXPECT_TRUE(u.ok()) << u.name << " = " << u.value << ", expected " << u.expected;
    }
}

TEST(Schedule, Examples) {
    TemperatureSchedule s{100, 100, 1.0, 10.0, Interpolation::Geometric};
    auto st = schedule_step(s, 0);
    EXPECT_EQ(st.tau, 1.0);
    EXPECT_FALSE(st.hard_forward);
    st = schedule_step(s, 100);
    EXPECT_EQ(st.tau, 10.0);
    EXPECT_TRUE(st.hard_forward);
    st = schedule_step(s, 5000);
    EXPECT_EQ(st.tau, 10.0);
    EXPECT_TRUE(st.hard_forward);
    s.interpolation = Interpolation::Linear;
    EXPECT_DOUBLE_EQ(schedule_step(s, 50).tau, 5.5);
    TemperatureSchedule straight{0, 10, 1.0, 10.0, Interpolation::Geometric};
    EXPECT_TRUE(schedule_step(straight, 0).hard_forward);
}

TEST(Schedule, MonotoneInPhaseOne) {
    for (auto interp : {Interpolation::Linear, Interpolation::Geometric}) {
        TemperatureSchedule s{37, 5, 0.5, 20.0, interp};
        double prev = 0.0;
        for (std::size_t e = 0; e < s.total_epochs(); ++e) {
            const auto st = schedule_step(s, e);
            EXPECT_GE(st.tau, prev);
            EXPECT_EQ(st.hard_forward, e >= 37);
            prev = st.tau;
        }
    }
    EXPECT_THROW(schedule_step({10, 10, 5.0, 1.0, Interpolation::Linear}, 0), ConfigError);
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
    for (auto kind : {OptimizerKind::Adam, OptimizerKind::AdamW, OptimizerKind::Sgd}) {
        Optimizer opt({kind, 0.1, 0.0, 0.9, 0.999, 1e-8, 50});
        RealVector p{1.0, -2.0};
        for (std::size_t s = 0; s < 10; ++s) {
            opt.step("p", p, RealVector{0.0, 0.0}, s);
        }
        EXPECT_EQ(p, (RealVector{1.0, -2.0}));
    }
}

TEST(Optimizer, HandComputedFirstAdamStep) {
    const double lr = 0.05, eps = 1e-8;
    Optimizer opt({OptimizerKind::Adam, lr, 0.0, 0.9, 0.999, eps, 0});
    RealVector p{0.0};
    opt.step("x", p, RealVector{1.0}, 0);
    // m_hat = 1, v_hat = 1
    EXPECT_NEAR(p[0], -lr * 1.0 / (1.0 + eps), 1e-12);
}

TEST(Optimizer, CosineEndpoint) {
    OptimizerConfig cfg{OptimizerKind::AdamW, 0.1, 0.01, 0.9, 0.999, 1e-8, 10};
    EXPECT_EQ(cfg.rate_at(0), 0.1);
    EXPECT_NEAR(cfg.rate_at(5), 0.05, 1e-15);
    EXPECT_EQ(cfg.rate_at(10), 0.0);
    Optimizer opt(cfg);
    RealVector p{1.0};
    opt.step("x", p, RealVector{3.0}, 10);
    opt.step("x", p, RealVector{3.0}, 11);
    EXPECT_EQ(p[0], 1.0);
}

TEST(Optimizer, AdamWDecouplesDecay) {
    Optimizer opt({OptimizerKind::AdamW, 0.1, 0.5, 0.9, 0.999, 1e-8, 0});
    RealVector p{2.0};
    opt.step("x", p, RealVector{0.0}, 0);
    EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Optimizer, RejectsNonFiniteGradientNamingTheBlock) {
    Optimizer opt({});
    RealVector p{0.0};
    try {
        opt.step("theta", p, RealVector{std::nan("")}, 0);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
    }
    EXPECT_THROW(Optimizer({OptimizerKind::Adam, -1.0}), ConfigError);
}
