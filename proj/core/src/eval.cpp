#include "affinv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iterator>
#include <map>
#include <mutex>
#include <tuple>

#include <fmt/format.h>

#include "affinv/error.hpp"
#include "affinv/log.hpp"
#include "affinv/rng.hpp"
#include "csv.hpp"

namespace affinv::eval {

Interval ci95(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("ci95: empty input");
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / n;
    if (values.size() == 1) return {mean, mean, mean};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double half = 1.96 * sd / std::sqrt(n);
    return {mean, mean - half, mean + half};
}

// ---------------------------------------------------------------------------

PreparedCorpus::PreparedCorpus(const Corpus& corpus, const PairConfig& pairs, const SignConfig& signs)
    : corpus_(&corpus), pair_config_(pairs), sign_config_(signs) {
    pairs_.reserve(corpus.size());
    signs_.reserve(corpus.size());
    for (const auto& env : corpus.environments()) {
        pairs_.push_back(build_pairs(env, pairs));
        if (pairs_.back().empty()) {
            log::warn(fmt::format("environment '{}' yields no pairs at p_t = {}", env.id, pairs.p_t));
            signs_.push_back(SignVector{env.id, std::vector<std::int8_t>(corpus.dim(), 0)});
        } else {
            signs_.push_back(sign_vector(pairs_.back(), signs));
        }
    }
}

std::size_t PreparedCorpus::index(const std::string& env_id) const {
    auto idx = corpus_->index_of(env_id);
    if (!idx) throw InvalidInput(fmt::format("unknown environment '{}'", env_id));
    return *idx;
}

SignMatrix PreparedCorpus::sign_matrix(std::span<const std::string> env_ids) const {
    std::vector<SignVector> rows;
    rows.reserve(env_ids.size());
    for (const auto& id : env_ids) rows.push_back(signs(id));
    return stack_signs(rows);
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_index(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> pending;
    for (std::size_t start = 0; start < n; start += threads) {
        pending.clear();
        for (std::size_t i = start; i < std::min(n, start + threads); ++i)
            pending.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
        for (auto& f : pending) f.get();
    }
}

void check_unique_subset(const PreparedCorpus& prepared, std::span<const std::string> envs) {
    std::vector<std::string> sorted(envs.begin(), envs.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InvalidInput("environment subset contains duplicates");
    for (const auto& id : envs) (void)prepared.index(id);
}

}  // namespace

namespace {

/// Fold results keyed by held-out environment, training environments and feature mask.
/// Sweep points that select the same mask reuse the trained fold.
using FoldKey = std::tuple<std::string, std::vector<std::string>, std::optional<std::vector<std::size_t>>>;
using FoldCache = std::map<FoldKey, FoldResult>;

FoldResult fold_impl(const PreparedCorpus& prepared, std::span<const std::string> train_envs,
                     const std::string& test_env, const ModelConfig& config, pref::PrefModel* model_out,
                     FoldCache* cache, std::mutex* cache_mutex) {
    std::vector<std::string> training(train_envs.begin(), train_envs.end());
    if (std::find(training.begin(), training.end(), test_env) != training.end())
        throw InvalidInput(fmt::format("run_fold: test environment '{}' is part of the training set", test_env));

    if (config.redetect_per_fold && training.size() >= 3) {
        const auto partition = ocsvm::partition_environments(prepared.sign_matrix(training), config.detect);
        training = partition.inliers();
    }

    std::optional<std::vector<std::size_t>> mask;
    if (config.lambda) mask = invariant_mask(prepared.sign_matrix(training), *config.lambda).selected;

    FoldKey key{test_env, training, mask};
    if (cache && !model_out) {
        std::lock_guard lock(*cache_mutex);
        if (auto it = cache->find(key); it != cache->end()) return it->second;
    }

    std::vector<PairSet> train_pairs;
    for (const auto& id : training)
        if (!prepared.pairs(id).empty()) train_pairs.push_back(prepared.pairs(id));
    if (train_pairs.empty())
        throw InvalidInput(fmt::format("fold '{}': training environments contain no pairs", test_env));

    auto model = pref::train(train_pairs, mask, config.train);
    const PairSet& test = prepared.pairs(test_env);

    FoldResult fold;
    fold.held_out_env = test_env;
    fold.n_test_pairs = test.size();
    fold.n_train_envs = training.size();
    fold.n_features = model.features.size();
    fold.zero_features = model.zero_features();
    if (!test.empty()) fold.accuracy = pref::accuracy(model, std::span<const PairSet>(&test, 1));
    if (model_out) *model_out = std::move(model);
    if (cache) {
        std::lock_guard lock(*cache_mutex);
        cache->emplace(std::move(key), fold);
    }
    return fold;
}

Report lopo_impl(const PreparedCorpus& prepared, std::span<const std::string> envs, const ModelConfig& config,
                 std::string label, FoldCache* cache) {
    if (envs.size() < 2) throw InvalidInput(fmt::format("lopo_cv: need at least 2 environments, got {}", envs.size()));
    check_unique_subset(prepared, envs);

    Report report;
    report.label = std::move(label);
    report.envs.assign(envs.begin(), envs.end());
    report.config = config;

    std::mutex cache_mutex;
    std::vector<std::optional<FoldResult>> results(envs.size());
    for_each_index(envs.size(), config.threads, [&](std::size_t k) {
        if (prepared.pairs(envs[k]).empty()) return;
        std::vector<std::string> training;
        training.reserve(envs.size() - 1);
        for (std::size_t i = 0; i < envs.size(); ++i)
            if (i != k) training.push_back(envs[i]);
        results[k] = fold_impl(prepared, training, envs[k], config, nullptr, cache, &cache_mutex);
    });

    std::vector<double> accs;
    for (std::size_t k = 0; k < envs.size(); ++k) {
        if (!results[k]) {
            log::warn(fmt::format("lopo_cv: environment '{}' has no test pairs; fold skipped", envs[k]));
            report.skipped.push_back(envs[k]);
            continue;
        }
        report.zero_features = report.zero_features || results[k]->zero_features;
        accs.push_back(results[k]->accuracy);
        report.folds.push_back(std::move(*results[k]));
    }
    if (accs.empty()) {
        report.computable = false;
    } else {
        report.ci = ci95(accs);
        report.mean_accuracy = report.ci.mean;
    }
    if (config.lambda)
        report.n_features = static_cast<long long>(invariant_mask(prepared.sign_matrix(envs), *config.lambda).selected.size());
    return report;
}

}  // namespace

FoldResult run_fold(const PreparedCorpus& prepared, std::span<const std::string> train_envs,
                    const std::string& test_env, const ModelConfig& config, pref::PrefModel* model_out) {
    return fold_impl(prepared, train_envs, test_env, config, model_out, nullptr, nullptr);
}

Report lopo_cv(const PreparedCorpus& prepared, std::span<const std::string> envs, const ModelConfig& config,
               std::string label) {
    return lopo_impl(prepared, envs, config, std::move(label), nullptr);
}

Report lopo_cv(const Corpus& corpus, std::span<const std::string> envs, const ModelConfig& config) {
    const PreparedCorpus prepared(corpus, config.pairs, config.signs);
    return lopo_cv(prepared, envs, config);
}

namespace {

Report split_report(const PreparedCorpus& prepared, const std::vector<std::string>& envs, const ModelConfig& config,
                    const std::string& label) {
    if (envs.size() < 2) {
        log::warn(fmt::format("'{}' subset has {} environment(s); report not computable", label, envs.size()));
        Report r;
        r.label = label;
        r.envs = envs;
        r.computable = false;
        r.config = config;
        return r;
    }
    return lopo_cv(prepared, envs, config, label);
}

}  // namespace

SplitReports experiment_splits(const PreparedCorpus& prepared, const ocsvm::Partition& partition,
                               const ModelConfig& config) {
    SplitReports out;
    out.all = split_report(prepared, partition.env_ids, config, "all");
    out.inliers = split_report(prepared, partition.inliers(), config, "inliers");
    out.outliers = split_report(prepared, partition.outliers(), config, "outliers");
    return out;
}

ControlReport random_subset_control(const PreparedCorpus& prepared, std::span<const std::string> pool, std::size_t k,
                                    std::size_t n_runs, std::uint64_t seed, const ModelConfig& config,
                                    std::string label) {
    if (k > pool.size())
        throw InvalidInput(fmt::format("random_subset_control: k = {} exceeds pool size {}", k, pool.size()));
    if (k < 2) throw InvalidInput("random_subset_control: k must be at least 2");
    if (n_runs < 1) throw InvalidInput("random_subset_control: n_runs must be at least 1");
    check_unique_subset(prepared, pool);

    ControlReport out;
    out.label = std::move(label);
    out.pool.assign(pool.begin(), pool.end());
    out.k = k;
    out.n_runs = n_runs;
    out.seed = seed;
    for (std::size_t run = 0; run < n_runs; ++run) {
        auto rng = make_rng(seed, "control", run);
        std::vector<std::string> draw;
        draw.reserve(k);
        std::sample(pool.begin(), pool.end(), std::back_inserter(draw), static_cast<std::ptrdiff_t>(k), rng);
        out.runs.push_back(lopo_cv(prepared, draw, config, fmt::format("{}-{}", out.label, run)));
        out.run_means.push_back(out.runs.back().mean_accuracy);
        out.draws.push_back(std::move(draw));
    }
    out.aggregate = ci95(out.run_means);
    return out;
}

std::vector<SweepRow> lambda_sweep(const PreparedCorpus& prepared, std::span<const std::string> envs,
                                   const std::string& subset, std::span<const double> lambdas,
                                   const ModelConfig& config) {
    std::vector<SweepRow> rows;
    FoldCache cache;
    for (double lambda : lambdas) {
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw InvalidInput(fmt::format("lambda_sweep: lambda {} outside [0,1]", lambda));
        SweepRow row;
        row.lambda = lambda;
        row.subset = subset;
        if (envs.size() < 2) {
            row.computable = false;
            rows.push_back(row);
            continue;
        }
        ModelConfig cfg = config;
        cfg.lambda = lambda;
        const auto report = lopo_impl(prepared, envs, cfg, subset, &cache);
        row.mean_accuracy = report.mean_accuracy;
        row.ci = report.ci;
        row.n_features = report.n_features;
        row.zero_features = report.zero_features || report.n_features == 0;
        row.computable = report.computable;
        rows.push_back(row);
    }
    return rows;
}

std::vector<SweepRow> lambda_sweep(const PreparedCorpus& prepared, const ocsvm::Partition& partition,
                                   std::span<const double> lambdas, const ModelConfig& config) {
    auto rows = lambda_sweep(prepared, partition.inliers(), "inliers", lambdas, config);
    auto out_rows = lambda_sweep(prepared, partition.outliers(), "outliers", lambdas, config);
    rows.insert(rows.end(), out_rows.begin(), out_rows.end());
    return rows;
}

std::vector<double> parse_lambda_grid(const std::string& text) {
    auto snap = [](double v) { return std::round(v * 1e12) / 1e12; };
    std::vector<double> out;
    try {
        if (text.find(':') != std::string::npos) {
            const auto parts = [&] {
                std::vector<std::string> p;
                std::size_t start = 0;
                while (true) {
                    auto pos = text.find(':', start);
                    p.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
                    if (pos == std::string::npos) break;
                    start = pos + 1;
                }
                return p;
            }();
            if (parts.size() != 3) throw InvalidInput("lambda grid must be start:stop:step");
            const double start = csv::parse_double(parts[0]);
            const double stop = csv::parse_double(parts[1]);
            const double step = csv::parse_double(parts[2]);
            if (!(step > 0.0) || stop < start) throw InvalidInput("lambda grid needs step > 0 and stop >= start");
            for (std::size_t i = 0;; ++i) {
                const double v = start + static_cast<double>(i) * step;
                if (v > stop + 1e-12) break;
                out.push_back(std::min(snap(v), snap(stop)));
            }
        } else {
            for (const auto& field : csv::split(text)) out.push_back(csv::parse_double(field));
        }
    } catch (const std::invalid_argument& e) {
        throw InvalidInput(fmt::format("bad lambda grid '{}': {}", text, e.what()));
    }
    for (double v : out)
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput(fmt::format("lambda {} outside [0,1]", v));
    return out;
}

}  // namespace affinv::eval
