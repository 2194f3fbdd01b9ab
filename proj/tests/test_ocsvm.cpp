#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "affinv/error.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/synth.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace affinv;
using namespace affinv::ocsvm;
using affinv::test::Gen;

namespace {

void expect_dual_invariants(const DualSolution& sol, const Eigen::MatrixXd& q) {
    EXPECT_NEAR(sol.alpha.sum(), 1.0, 1e-8);
    EXPECT_GE(sol.alpha.minCoeff(), 0.0);
    EXPECT_LE(sol.alpha.maxCoeff(), sol.upper);
    EXPECT_LE(affinv::test::kkt_oracle(q, sol.alpha, sol.upper), 1e-6);
}

// Environments whose every feature is a fixed multiple of the window label, so
// each environment's sign vector is exactly its pattern.
Corpus pattern_corpus(const Eigen::MatrixXd& patterns, Gen& g) {
    std::vector<Environment> envs;
    for (Eigen::Index e = 0; e < patterns.rows(); ++e) {
        const auto labels = g.window_labels(12);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(labels.data(), 12);
        y(0) = 0.0;
        y(1) = 1.0;
        Eigen::MatrixXd x = y * patterns.row(e);
        Environment env;
        env.id = fmt::format("e{:02}", e);
        env.sessions.emplace_back("s0", x, y);
        envs.push_back(std::move(env));
    }
    return Corpus(std::move(envs));
}

}  // namespace

TEST(Kernel, Examples) {
    const Eigen::Vector2d a(0.3, -1.2);
    EXPECT_DOUBLE_EQ(kernel_eval(a, a, Kernel::rbf(1.0)), 1.0);
    EXPECT_NEAR(kernel_eval(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 0), Kernel::rbf(0.5)), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(std::exp(-2.0), 0.135335, 1e-6);
    EXPECT_DOUBLE_EQ(kernel_eval(Eigen::Vector3d(1, -1, 0), Eigen::Vector3d(1, 1, 1), Kernel::linear()), 0.0);
    EXPECT_THROW(kernel_eval(Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0), Kernel::linear()), InvalidInput);
}

TEST(Kernel, GramMatchesDefinition) {
    Gen g(31);
    const auto x = g.normal_matrix(9, 4);
    EXPECT_TRUE(gram_matrix(x, Kernel::rbf(0.7)).isApprox(affinv::test::rbf_gram_oracle(x, 0.7), 1e-14));
    EXPECT_TRUE(gram_matrix(x, Kernel::linear()).isApprox(x * x.transpose(), 1e-14));
    EXPECT_EQ(kernel_type_from_string("linear"), Kernel::Type::Linear);
    EXPECT_EQ(to_string(Kernel::Type::Rbf), "rbf");
    EXPECT_THROW(kernel_type_from_string("poly"), InvalidInput);
}

TEST(OcsvmTrain, IdenticalRowsScoreEquallyAndNonNegative) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(4, 3, 0.7);
    for (double nu : {0.1, 0.3, 0.5, 1.0}) {
        const auto m = train(x, nu, Kernel::rbf(1.0));
        const auto s = m.decisions(x);
        for (Eigen::Index i = 0; i < 4; ++i) {
            EXPECT_EQ(s(i), s(0));
            EXPECT_GE(s(i), 0.0);
        }
    }
}

TEST(OcsvmTrain, FarPointsGetLowestNegativeScores) {
    Gen g(32);
    Eigen::MatrixXd x(45, 2);
    x.topRows(40) = g.normal_matrix(40, 2, 0.1);
    for (int k = 0; k < 5; ++k) {
        const double t = 2.0 * M_PI * k / 5.0;
        x(40 + k, 0) = 10.0 * std::cos(t);
        x(40 + k, 1) = 10.0 * std::sin(t);
    }
    const auto m = train(x, 0.2, Kernel::rbf(1.0));
    const auto s = m.decisions(x);

    const auto q = affinv::test::rbf_gram_oracle(x, 1.0);
    const auto oracle = affinv::test::solve_qp_oracle(q, 0.2);
    for (Eigen::Index i = 0; i < 45; ++i) EXPECT_NEAR(s(i), oracle.gradient(i) - oracle.rho, 1e-6);

    std::vector<Eigen::Index> order(45);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s(a) < s(b); });
    for (int k = 0; k < 5; ++k) {
        EXPECT_GE(order[static_cast<std::size_t>(k)], 40);
        EXPECT_LT(s(order[static_cast<std::size_t>(k)]), 0.0);
    }
}

TEST(OcsvmTrain, NuPropertyOnGaussianCloud) {
    Gen g(33);
    const auto x = g.normal_matrix(100, 2);
    const auto m = train(x, 0.1, Kernel::rbf(0.5));
    const auto s = m.decisions(x);
    EXPECT_LE((s.array() < 0.0).count(), 10);
    EXPECT_GE(m.alphas.size(), 10);

    const auto oracle = affinv::test::solve_qp_oracle(affinv::test::rbf_gram_oracle(x, 0.5), 0.1);
    EXPECT_LE((oracle.gradient.array() - oracle.rho < -1e-9).count(), 10);
}

TEST(OcsvmTrain, MatchesDenseQpOracleOnSmallInstances) {
    Gen g(34);
    for (int c = 0; c < 60; ++c) {
        const std::size_t n = g.size(2, 20);
        const std::size_t d = g.size(1, 6);
        const auto x = g.coin() ? g.normal_matrix(n, d) : g.sign_matrix(n, d, 0.3);
        const double nu = g.uniform(0.05, 1.0);
        const Kernel k = g.coin(0.8) ? Kernel::rbf(g.uniform(0.1, 2.0)) : Kernel::linear();
        const auto q = k.type == Kernel::Type::Rbf ? affinv::test::rbf_gram_oracle(x, k.gamma)
                                                   : Eigen::MatrixXd(x * x.transpose());
        const auto sol = solve_dual(q, nu);
        expect_dual_invariants(sol, q);
        const auto oracle = affinv::test::solve_qp_oracle(q, nu);
        EXPECT_NEAR(0.5 * sol.alpha.dot(q * sol.alpha), oracle.objective, 1e-9);

        const auto m = train(x, nu, k);
        const auto s = m.decisions(x);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            EXPECT_NEAR(s(i), oracle.gradient(i) - oracle.rho, 1e-6) << "case " << c << " row " << i;
    }
}

TEST(OcsvmTrain, PermutationInvariantScores) {
    Gen g(35);
    for (int c = 0; c < 10; ++c) {
        const auto x = g.normal_matrix(30, 3);
        std::vector<Eigen::Index> perm(30);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), g.rng());
        Eigen::MatrixXd p(30, 3);
        for (Eigen::Index i = 0; i < 30; ++i) p.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        const auto a = train(x, 0.3, Kernel::rbf(0.4)).decisions(x);
        const auto b = train(p, 0.3, Kernel::rbf(0.4)).decisions(x);
        EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(OcsvmTrain, ModelInvariants) {
    Gen g(36);
    const auto x = g.normal_matrix(50, 4);
    const auto m = train(x, 0.25, Kernel::rbf(0.25));
    EXPECT_NEAR(m.alphas.sum(), 1.0, 1e-8);
    EXPECT_GT(m.alphas.minCoeff(), 0.0);
    EXPECT_LE(m.alphas.maxCoeff(), 1.0 / (0.25 * 50));
    EXPECT_EQ(m.n_train, 50u);
    EXPECT_LE(m.diagnostics.kkt_residual, 1e-6);

    const Eigen::VectorXd probe = g.normal_matrix(1, 4).row(0).transpose();
    double manual = -m.rho;
    for (Eigen::Index k = 0; k < m.support.rows(); ++k)
        manual += m.alphas(k) * std::exp(-0.25 * (m.support.row(k).transpose() - probe).squaredNorm());
    EXPECT_NEAR(m.decision(probe), manual, 1e-12);
    EXPECT_THROW(m.decision(Eigen::VectorXd::Zero(3)), InvalidInput);
}

TEST(OcsvmTrain, Errors) {
    Gen g(37);
    const auto x = g.normal_matrix(20, 3);
    EXPECT_THROW(train(x, 0.0, Kernel::rbf(1.0)), InvalidInput);
    EXPECT_THROW(train(x, 1.5, Kernel::rbf(1.0)), InvalidInput);
    EXPECT_THROW(train(x.topRows(1), 0.5, Kernel::rbf(1.0)), InvalidInput);
    EXPECT_THROW(train(x, 0.5, Kernel::rbf(-1.0)), InvalidInput);
    try {
        train(x, 0.3, Kernel::rbf(1.0), SolverOptions{1e-9, 1});
        FAIL() << "expected non-convergence";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual(), 0.0);
        EXPECT_EQ(e.iterations(), 1u);
    }
}

TEST(Detect, PlantedFlippedPatternEnvironments) {
    Gen g(38);
    const std::size_t d = 200;
    Eigen::RowVectorXd shared(d);
    for (std::size_t j = 0; j < d; ++j) shared(static_cast<Eigen::Index>(j)) = g.coin() ? 1.0 : -1.0;
    Eigen::MatrixXd patterns(50, d);
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    for (Eigen::Index e = 0; e < 50; ++e) {
        patterns.row(e) = shared;
        if (e >= 40) {
            std::shuffle(idx.begin(), idx.end(), g.rng());
            for (std::size_t k = 0; k < d * 6 / 10; ++k) patterns(e, static_cast<Eigen::Index>(idx[k])) *= -1.0;
        }
    }
    const auto corpus = pattern_corpus(patterns, g);
    DetectConfig cfg;
    cfg.nu = 0.25;
    const auto p = detect_outliers(corpus, cfg);
    std::vector<std::string> expected;
    for (int e = 40; e < 50; ++e) expected.push_back(fmt::format("e{:02}", e));
    EXPECT_EQ(p.outliers(), expected);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p.outlier[i], p.scores[i] < 0.0);
    EXPECT_EQ(p, detect_outliers(corpus, cfg));
}

TEST(Detect, IdenticalEnvironmentsTieToInliers) {
    Gen g(39);
    const auto row = g.sign_matrix(1, 30, 0.2);
    const auto corpus = pattern_corpus(row.replicate(10, 1), g);
    DetectConfig cfg;
    cfg.nu = 0.1;
    const auto p = detect_outliers(corpus, cfg);
    EXPECT_LE(p.outliers().size(), 1u);
    EXPECT_TRUE(p.outliers().empty());
    for (double s : p.scores) EXPECT_EQ(s, 0.0);
}

TEST(Detect, TwoEnvironmentsAreBothInliers) {
    Gen g(40);
    const auto corpus = pattern_corpus(g.sign_matrix(2, 5, 0.0), g);
    const auto p = detect_outliers(corpus, DetectConfig{});
    EXPECT_TRUE(p.short_circuited);
    EXPECT_EQ(p.inliers().size(), 2u);
    EXPECT_TRUE(p.outliers().empty());
}

TEST(Detect, PartitionCoversEveryEnvironmentOnce) {
    synth::SynthSpec spec;
    spec.n_envs = 12;
    spec.n_outliers = 3;
    spec.d = 40;
    spec.n_invariant = 15;
    spec.seed = 3;
    const auto sc = synth::generate(spec);
    const auto p = detect_outliers(sc.corpus, DetectConfig{});
    auto in = p.inliers();
    auto out = p.outliers();
    EXPECT_EQ(in.size() + out.size(), sc.corpus.size());
    std::vector<std::string> all = in;
    all.insert(all.end(), out.begin(), out.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, sc.corpus.env_ids());
    EXPECT_THROW(p.is_outlier("nope"), InvalidInput);
    DetectConfig bad;
    bad.nu = 0.0;
    EXPECT_THROW(detect_outliers(sc.corpus, bad), InvalidInput);
}
