// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>

#include "affinv/correlation.hpp"
#include "affinv/eval.hpp"
#include "affinv/invariance.hpp"
#include "affinv/io.hpp"
#include "affinv/log.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/preflearn.hpp"
#include "affinv/synth.hpp"
#include "cli.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/regimes.hpp"

using namespace affinv;
using affinv::test::Gen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr int kSeeds = 20;

Outcome criterion1() {
    const auto t0 = Clock::now();
    Gen g(101);
    double worst = 0.0;
    int undefined = 0;
    for (int c = 0; c < 1000; ++c) {
        const std::size_t n = g.size(2, 200);
        const double scale = std::pow(10.0, g.uniform(-4, 4));
        const double shift = g.uniform(-1e3, 1e3);
        auto x = g.normals(n, scale);
        for (auto& v : x) v += shift;
        const auto y = g.binary_labels(n);
        const auto rpb = point_biserial(x, y);
        const auto oracle = affinv::test::pearson_oracle(x, y);
        if (!rpb || !oracle) {
            ++undefined;
            continue;
        }
        worst = std::max(worst, std::abs(*rpb - static_cast<double>(*oracle)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-10 && undefined == 0 && secs < 5.0,
            fmt::format("1000 instances, max |r_pb - r| = {:.2e}, undefined {}, {:.2f} s", worst, undefined, secs)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    Gen g(102);
    double worst = 0.0;
    int instances = 0;
    for (; instances < 300; ++instances) {
        const std::size_t n = g.size(2, 20), d = g.size(1, 8);
        const auto x = g.coin() ? g.normal_matrix(n, d) : g.sign_matrix(n, d, 0.3);
        const double nu = g.uniform(0.05, 1.0);
        const double gamma = g.uniform(0.05, 2.0);
        const auto scores = ocsvm::train(x, nu, ocsvm::Kernel::rbf(gamma)).decisions(x);
        const auto oracle = affinv::test::solve_qp_oracle(affinv::test::rbf_gram_oracle(x, gamma), nu);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            worst = std::max(worst, std::abs(scores(i) - (oracle.gradient(i) - oracle.rho)));
    }
    int nu_violations = 0;
    for (int s = 0; s < 50; ++s) {
        Gen h(2000 + static_cast<std::uint64_t>(s));
        const auto x = h.normal_matrix(100, 2);
        const double nu = h.uniform(0.05, 0.9);
        const auto m = ocsvm::train(x, nu, ocsvm::Kernel::rbf(0.5));
        const auto scores = m.decisions(x);
        const double outlier_frac = static_cast<double>((scores.array() < 0.0).count()) / 100.0;
        const double support_frac = static_cast<double>(m.alphas.size()) / 100.0;
        if (outlier_frac > nu + 0.01 || support_frac < nu - 0.01) ++nu_violations;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && nu_violations == 0 && secs < 60.0,
            fmt::format("{} oracle instances, max decision error {:.2e}; nu-property violations {}/50; {:.1f} s",
                        instances, worst, nu_violations, secs)};
}

Outcome criterion3() {
    const auto t0 = Clock::now();
    double f1 = 0.0, worst = 1.0;
    for (int s = 0; s < kSeeds; ++s) {
        const auto sc = synth::generate(affinv::test::recovery_spec(static_cast<std::uint64_t>(s)));
        const auto p = ocsvm::detect_outliers(sc.corpus, affinv::test::detection_config());
        const double f = synth::score_detection(p, sc.truth).f1;
        f1 += f / kSeeds;
        worst = std::min(worst, f);
    }
    const double secs = seconds_since(t0);
    return {f1 >= 0.9 && secs < 600.0,
            fmt::format("mean F1 {:.3f} (worst seed {:.3f}) over {} seeds, nu = {}, {:.1f} s", f1, worst, kSeeds,
                        affinv::test::kDetectionNu, secs)};
}

Outcome criterion4() {
    const auto t0 = Clock::now();
    double in = 0, all = 0, out = 0;
    int ordered = 0;
    for (int s = 0; s < kSeeds; ++s) {
        const auto sc = synth::generate(affinv::test::split_spec(static_cast<std::uint64_t>(s)));
        const eval::PreparedCorpus prepared(sc.corpus, PairConfig{});
        const auto p = ocsvm::detect_outliers(sc.corpus, affinv::test::detection_config());
        const auto r = eval::experiment_splits(prepared, p, eval::ModelConfig{});
        if (!r.outliers.computable || !r.inliers.computable) return {false, fmt::format("seed {}: split not computable", s)};
        in += r.inliers.mean_accuracy / kSeeds;
        all += r.all.mean_accuracy / kSeeds;
        out += r.outliers.mean_accuracy / kSeeds;
        if (r.inliers.mean_accuracy > r.all.mean_accuracy && r.all.mean_accuracy > r.outliers.mean_accuracy) ++ordered;
    }
    const bool pass = in > all && all > out && in - out >= 0.10 && out >= 0.45 && out <= 0.60;
    return {pass, fmt::format("mean accuracy inliers {:.3f} > all {:.3f} > outliers {:.3f}; gap {:.3f}; "
                              "ordering held on {}/{} seeds; {:.1f} s",
                              in, all, out, in - out, ordered, kSeeds, seconds_since(t0))};
}

Outcome criterion5() {
    Gen g(105);
    const auto grid = eval::parse_lambda_grid("0.0:1.0:0.1");
    int failures = 0;
    for (int c = 0; c < 100; ++c) {
        const std::size_t e = g.size(1, 60), d = g.size(1, 200);
        SignMatrix sm;
        for (std::size_t r = 0; r < e; ++r) sm.env_ids.push_back(fmt::format("e{}", r));
        sm.values = g.sign_matrix(e, d, g.uniform(0.0, 0.9));
        std::size_t previous = SIZE_MAX;
        bool ok = grid.size() == 11;
        for (double lambda : grid) {
            const auto n = invariant_mask(sm, lambda).selected.size();
            ok = ok && n <= previous;
            previous = n;
        }
        for (auto j : invariant_mask(sm, 1.0).selected) {
            const auto col = sm.values.col(static_cast<Eigen::Index>(j));
            ok = ok && ((col.array() == 1.0).all() || (col.array() == -1.0).all());
        }
        if (!ok) ++failures;
    }
    return {failures == 0, fmt::format("100 sign matrices, 11-point grid, {} violations", failures)};
}

Outcome criterion6() {
    const auto t0 = Clock::now();
    const auto grid = eval::parse_lambda_grid("0.0:1.0:0.1");
    std::vector<double> curve(grid.size(), 0.0);
    for (int s = 0; s < kSeeds; ++s) {
        const auto sc = synth::generate(affinv::test::mask_spec(static_cast<std::uint64_t>(s)));
        const eval::PreparedCorpus prepared(sc.corpus, PairConfig{});
        const auto inliers = affinv::test::truth_partition(sc.truth).inliers();
        const auto rows = eval::lambda_sweep(prepared, inliers, "inliers", grid, eval::ModelConfig{});
        for (std::size_t k = 0; k < grid.size(); ++k) curve[k] += rows[k].mean_accuracy / kSeeds;
    }
    const auto best = static_cast<std::size_t>(std::max_element(curve.begin(), curve.end()) - curve.begin());
    const double gain = curve[best] - curve[0];
    return {gain >= 0.03, fmt::format("inlier accuracy {:.3f} at lambda {:.1f} vs {:.3f} at lambda 0; gain {:.3f}; {:.1f} s",
                                      curve[best], grid[best], curve[0], gain, seconds_since(t0))};
}

Outcome criterion7() {
    Gen g(107);
    double worst = 0.0;
    for (int c = 0; c < 50; ++c) {
        const std::size_t n = g.size(5, 300), d = g.size(1, 12);
        const auto x = g.normal_matrix(n, d, g.uniform(0.1, 3.0));
        std::vector<double> y(n);
        for (auto& v : y) v = g.coin() ? 1.0 : 0.0;
        const std::vector<PairSet> pairs{PairSet::from_diffs("fd", x, y)};
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), std::size_t{0});
        const pref::PairDesign design(pairs, features, g.coin());
        const pref::PreferenceObjective obj(design, g.coin() ? 0.0 : g.uniform(0.0, 0.1));
        for (int k = 0; k < 10; ++k) {
            Eigen::VectorXd at(static_cast<Eigen::Index>(d + 1));
            for (Eigen::Index i = 0; i < at.size(); ++i) at(i) = g.normal(1.5);
            Eigen::VectorXd grad;
            obj.value_and_gradient(at, grad);
            const auto fd = affinv::test::central_difference([&](const Eigen::VectorXd& p) { return obj.value(p); }, at);
            worst = std::max(worst, (grad - fd).norm() / std::max(fd.norm(), 1e-8));
        }
    }
    return {worst <= 1e-5, fmt::format("500 points over 50 datasets, max relative error {:.2e}", worst)};
}

std::string strip_timestamp_line(const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line))
        if (line.rfind("  \"generated_at\": ", 0) != 0) out += line + "\n";
    return out;
}

Outcome criterion8() {
    affinv::test::TempDir dir("acceptance-determinism");
    auto pipeline = [&](const fs::path& out) {
        const std::string corpus = (out / "corpus").string();
        const std::string part = (out / "detect" / "partition.json").string();
        const std::vector<std::vector<std::string>> commands{
            {"synth", "--out", corpus, "--seed", "17", "--n-envs", "12", "--n-outliers", "4", "--d", "40",
             "--n-invariant", "15"},
            {"detect", "--corpus", corpus, "--out", (out / "detect").string(), "--nu", "0.6"},
            {"select", "--corpus", corpus, "--out", (out / "select").string()},
            {"train", "--corpus", corpus, "--out", (out / "train").string(), "--lambda", "0.7"},
            {"eval", "--corpus", corpus, "--out", (out / "eval").string(), "--nu", "0.6"},
            {"control", "--corpus", corpus, "--out", (out / "control").string(), "--runs", "4", "--seed", "5", "--k", "4"},
            {"sweep", "--corpus", corpus, "--out", (out / "sweep").string(), "--lambdas", "0:1:0.2", "--threads", "2"}};
        for (const auto& c : commands)
            if (cli::run(c) != 0) return false;
        return true;
    };
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    // Same working-directory-relative inputs for both runs.
    const auto cwd = fs::current_path();
    fs::current_path(dir / "a");
    std::fflush(stdout);
    const int saved = ::dup(STDOUT_FILENO);
    const int devnull = ::open("/dev/null", O_WRONLY);
    ::dup2(devnull, STDOUT_FILENO);
    const bool ok_a = pipeline(".");
    fs::current_path(dir / "b");
    const bool ok_b = pipeline(".");
    std::fflush(stdout);
    ::dup2(saved, STDOUT_FILENO);
    ::close(devnull);
    ::close(saved);
    fs::current_path(cwd);
    if (!ok_a || !ok_b) return {false, "pipeline command failed"};

    std::size_t files = 0, differing = 0;
    std::string first_diff;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir / "a");
        ++files;
        const auto other = dir / "b" / rel;
        if (!fs::exists(other) ||
            strip_timestamp_line(io::read_text(e.path())) != strip_timestamp_line(io::read_text(other))) {
            ++differing;
            if (first_diff.empty()) first_diff = rel.string();
        }
    }
    return {differing == 0 && files > 0,
            fmt::format("7 commands run twice, {} files compared, {} differ{}", files, differing,
                        first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

Outcome criterion9() {
    Gen g(109);
    int unbalanced = 0, non_monotone = 0, miscounted = 0;
    const std::vector<double> thresholds{0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0};
    for (int c = 0; c < 200; ++c) {
        const auto s = g.session(g.size(2, 50), g.size(1, 5));
        const std::vector<double> labels(s.labels().data(), s.labels().data() + s.size());
        std::size_t previous = SIZE_MAX;
        for (double p_t : thresholds) {
            const auto sym = build_pairs(s, PairConfig{p_t, true});
            const auto positives = static_cast<std::size_t>(std::count(sym.labels().begin(), sym.labels().end(), 1.0));
            if (2 * positives != sym.size()) ++unbalanced;
            const auto plain = build_pairs(s, PairConfig{p_t, false});
            if (plain.size() > previous) ++non_monotone;
            if (plain.size() != affinv::test::pair_count_oracle(labels, p_t)) ++miscounted;
            previous = plain.size();
        }
    }
    return {unbalanced == 0 && non_monotone == 0 && miscounted == 0,
            fmt::format("200 sessions x {} thresholds: unbalanced {}, non-monotone {}, count mismatches {}",
                        thresholds.size(), unbalanced, non_monotone, miscounted)};
}

}  // namespace

int main() {
    log::set_level(log::Level::Error);
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << fmt::format("criterion {}: {} - {}", i + 1, o.pass ? "PASS" : "FAIL", o.detail) << std::endl;
    }
    return failures;
}
