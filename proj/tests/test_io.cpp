#include <gtest/gtest.h>

#include <json.hpp>

#include "affinv/error.hpp"
#include "affinv/io.hpp"
#include "support/generators.hpp"

using namespace affinv;
using affinv::test::Gen;

namespace {

eval::Report sample_report(Gen& g, std::optional<double> lambda) {
    std::vector<Environment> envs;
    for (int e = 0; e < 4; ++e) envs.push_back(g.environment(fmt::format("e{}", e), 1, 10, 3));
    const Corpus corpus(std::move(envs));
    const eval::PreparedCorpus prepared(corpus, PairConfig{0.1, true});
    eval::ModelConfig cfg;
    cfg.pairs = PairConfig{0.1, true};
    cfg.lambda = lambda;
    cfg.train.reg = 1e-3;
    return eval::lopo_cv(prepared, corpus.env_ids(), cfg, "sample");
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Json, TimestampLeadsAndIsTheOnlyVariableLine) {
    ocsvm::Partition p;
    p.env_ids = {"a", "b"};
    p.scores = {0.5, -0.25};
    p.outlier = {false, true};
    const auto a = io::to_json(p, "T1");
    const auto b = io::to_json(p, "T2");
    EXPECT_EQ(a.substr(a.find('\n', a.find('\n') + 1)), b.substr(b.find('\n', b.find('\n') + 1)));
    EXPECT_EQ(a.substr(a.find('\n') + 1, a.find('\n', a.find('\n') + 1) - a.find('\n') - 1),
              "  \"generated_at\": \"T1\",");
    EXPECT_EQ(first_line(a), "{");
    const auto now = io::to_json(p);
    EXPECT_NE(now.find("\"generated_at\": \"20"), std::string::npos);
}

TEST(Json, PartitionRoundTrip) {
    ocsvm::Partition p;
    p.env_ids = {"a", "b", "c"};
    p.scores = {0.1 + 0.2, -1e-17, 0.0};
    p.outlier = {false, true, false};
    p.diagnostics = {17, 3.5e-10};
    EXPECT_EQ(io::partition_from_json(io::to_json(p)), p);
}

TEST(Json, MaskRoundTrip) {
    InvariantMask m;
    m.c_pos = {3, 0, 1};
    m.c_neg = {0, 2, 1};
    m.lambda = 0.7;
    m.n_envs = 3;
    m.selected = {0};
    EXPECT_EQ(io::mask_from_json(io::to_json(m)), m);
}

TEST(Json, ModelRoundTripPredictsIdentically) {
    Gen g(81);
    const auto x = g.normal_matrix(60, 4);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) y[i] = x(static_cast<Eigen::Index>(i), 1) > 0 ? 1.0 : 0.0;
    const std::vector<PairSet> pairs{PairSet::from_diffs("e", x, y)};
    const auto m = pref::train(pairs, std::vector<std::size_t>{1, 3});
    const auto r = io::model_from_json(io::to_json(m));
    EXPECT_EQ(r.dim, m.dim);
    EXPECT_EQ(r.masked, m.masked);
    EXPECT_EQ(r.features, m.features);
    EXPECT_EQ(r.weights, m.weights);
    EXPECT_EQ(r.bias, m.bias);
    EXPECT_EQ(r.center, m.center);
    EXPECT_EQ(r.scale, m.scale);
    EXPECT_EQ(r.reg, m.reg);
    EXPECT_EQ(r.diagnostics.iterations, m.diagnostics.iterations);
    EXPECT_EQ(r.diagnostics.converged, m.diagnostics.converged);
    for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd d = g.normal_matrix(4, 1).col(0);
        EXPECT_EQ(r.predict(d).probability, m.predict(d).probability);
    }
}

TEST(Json, ReportsRoundTrip) {
    Gen g(82);
    const auto masked = sample_report(g, 0.5);
    const auto plain = sample_report(g, std::nullopt);
    EXPECT_EQ(io::report_from_json(io::to_json(masked)), masked);
    EXPECT_EQ(io::report_from_json(io::to_json(plain)), plain);

    eval::SplitReports s{masked, plain, eval::Report{}};
    s.outliers.label = "outliers";
    s.outliers.computable = false;
    const auto back = io::split_reports_from_json(io::to_json(s));
    EXPECT_EQ(back.all, s.all);
    EXPECT_EQ(back.inliers, s.inliers);
    EXPECT_EQ(back.outliers, s.outliers);
}

TEST(Json, ControlAndSweepRoundTrip) {
    Gen g(83);
    std::vector<Environment> envs;
    for (int e = 0; e < 5; ++e) envs.push_back(g.environment(fmt::format("e{}", e), 1, 10, 3));
    const Corpus corpus(std::move(envs));
    const eval::PreparedCorpus prepared(corpus, PairConfig{});
    const auto ids = corpus.env_ids();
    const auto c = eval::random_subset_control(prepared, ids, 3, 2, 5, eval::ModelConfig{});
    EXPECT_EQ(io::control_from_json(io::to_json(c)), c);

    const std::vector<double> grid{0.0, 0.5, 1.0};
    const auto rows = eval::lambda_sweep(prepared, ids, "all", grid, eval::ModelConfig{});
    EXPECT_EQ(io::sweep_from_json(io::to_json(rows)), rows);
}

TEST(Json, SynthDocumentsRoundTrip) {
    synth::SynthSpec spec;
    spec.n_envs = 6;
    spec.n_outliers = 2;
    spec.d = 10;
    spec.n_invariant = 4;
    spec.seed = 0xfedcba9876543210ULL;
    EXPECT_EQ(io::synth_spec_from_json(io::to_json(spec)), spec);

    const auto truth = synth::generate(spec).truth;
    const auto back = io::truth_from_json(io::to_json(truth));
    EXPECT_EQ(back.env_ids, truth.env_ids);
    EXPECT_EQ(back.outlier_env_ids, truth.outlier_env_ids);
    EXPECT_EQ(back.invariant_features, truth.invariant_features);
    EXPECT_EQ(back.shared_coefficients, truth.shared_coefficients);
    EXPECT_EQ(back.coefficients, truth.coefficients);
}

TEST(Json, WrongKindAndMalformedInputRejected) {
    InvariantMask m;
    m.c_pos = {1};
    m.c_neg = {0};
    m.n_envs = 1;
    m.selected = {0};
    EXPECT_THROW(io::partition_from_json(io::to_json(m)), InvalidInput);
    EXPECT_THROW(io::mask_from_json("{not json"), InvalidInput);
    EXPECT_THROW(io::mask_from_json(R"({"kind":"invariant_mask"})"), InvalidInput);
}

TEST(Csv, Tables) {
    SignMatrix s;
    s.env_ids = {"a", "b"};
    s.values.resize(2, 3);
    s.values << 1, 0, -1, -1, 1, 0;
    EXPECT_EQ(io::sign_matrix_csv(s), "env_id,0,1,2\na,1,0,-1\nb,-1,1,0\n");

    ocsvm::Partition p;
    p.env_ids = {"a", "b"};
    p.scores = {0.25, -0.5};
    p.outlier = {false, true};
    EXPECT_EQ(io::partition_csv(p), "env_id,score,status\na,0.25,inlier\nb,-0.5,outlier\n");

    Gen g(84);
    const auto r = sample_report(g, 0.5);
    const auto folds = io::folds_csv({&r});
    EXPECT_EQ(first_line(folds), "subset,held_out_env,accuracy,n_test_pairs,n_train_envs,n_features,zero_features");
    EXPECT_EQ(static_cast<std::size_t>(std::count(folds.begin(), folds.end(), '\n')), r.folds.size() + 1);

    std::vector<eval::SweepRow> rows(2);
    rows[1].lambda = 0.1;
    const auto sweep = io::sweep_csv(rows);
    EXPECT_EQ(first_line(sweep), "lambda,subset,mean_accuracy,ci_lo,ci_hi,n_features,zero_features,computable");
    EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 3);
}

TEST(Files, AtomicWriteAndRead) {
    affinv::test::TempDir dir("io");
    const auto path = dir / "nested" / "out.json";
    io::write_text(path, "first\n");
    io::write_text(path, "second\n");
    EXPECT_EQ(io::read_text(path), "second\n");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "nested")) ++entries;
    EXPECT_EQ(entries, 1u);
    EXPECT_THROW(io::read_text(dir / "missing.txt"), Error);
}
