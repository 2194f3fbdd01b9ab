#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affinv/corpus.hpp"
#include "affinv/correlation.hpp"
#include "affinv/invariance.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/preflearn.hpp"

namespace affinv::eval {

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    bool operator==(const Interval&) const = default;
};

/// mean +/- 1.96 * sample_sd / sqrt(n); degenerate to [mean, mean] for n = 1 or zero spread.
Interval ci95(std::span<const double> values);

struct ModelConfig {
    PairConfig pairs;
    SignConfig signs;
    pref::TrainOptions train;
    std::optional<double> lambda;          // nullopt: no invariant mask
    bool redetect_per_fold = false;        // re-run outlier detection on each training fold
    ocsvm::DetectConfig detect;            // used when redetect_per_fold is set
    unsigned threads = 1;

    bool operator==(const ModelConfig&) const = default;
};

/// Per-environment pairs and sign vectors, computed once and shared by every fold.
class PreparedCorpus {
public:
    PreparedCorpus(const Corpus& corpus, const PairConfig& pairs, const SignConfig& signs = {});

    const Corpus& corpus() const noexcept { return *corpus_; }
    const PairConfig& pair_config() const noexcept { return pair_config_; }
    const SignConfig& sign_config() const noexcept { return sign_config_; }
    std::size_t index(const std::string& env_id) const;
    const PairSet& pairs(const std::string& env_id) const { return pairs_[index(env_id)]; }
    /// Sign vector of an environment; all zeros if it has no pairs.
    const SignVector& signs(const std::string& env_id) const { return signs_[index(env_id)]; }
    SignMatrix sign_matrix(std::span<const std::string> env_ids) const;

private:
    const Corpus* corpus_;
    PairConfig pair_config_;
    SignConfig sign_config_;
    std::vector<PairSet> pairs_;
    std::vector<SignVector> signs_;
};

struct FoldResult {
    std::string held_out_env;
    double accuracy = 0.0;
    std::size_t n_test_pairs = 0;
    std::size_t n_train_envs = 0;
    std::size_t n_features = 0;
    bool zero_features = false;

    bool operator==(const FoldResult&) const = default;
};

struct Report {
    std::string label;
    std::vector<std::string> envs;
    std::vector<FoldResult> folds;
    std::vector<std::string> skipped;   // held-out environments without test pairs
    double mean_accuracy = 0.0;
    Interval ci;
    bool computable = true;
    /// Mask size on the whole environment subset (-1 without a mask).
    long long n_features = -1;
    bool zero_features = false;          // at least one fold had an empty mask
    ModelConfig config;

    bool operator==(const Report&) const = default;
};

/// Leave-one-environment-out: one fold per environment in `envs`.
Report lopo_cv(const PreparedCorpus& prepared, std::span<const std::string> envs, const ModelConfig& config,
               std::string label = "lopo");
Report lopo_cv(const Corpus& corpus, std::span<const std::string> envs, const ModelConfig& config);

/// Trains on `train_envs`, returns the fold result on `test_env`. Exposed for leakage tests.
FoldResult run_fold(const PreparedCorpus& prepared, std::span<const std::string> train_envs,
                    const std::string& test_env, const ModelConfig& config, pref::PrefModel* model_out = nullptr);

struct SplitReports {
    Report all;
    Report inliers;
    Report outliers;
};

SplitReports experiment_splits(const PreparedCorpus& prepared, const ocsvm::Partition& partition,
                               const ModelConfig& config);

struct ControlReport {
    std::string label;
    std::vector<std::string> pool;
    std::size_t k = 0;
    std::size_t n_runs = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> draws;
    std::vector<Report> runs;
    std::vector<double> run_means;
    Interval aggregate;

    bool operator==(const ControlReport&) const = default;
};

/// n_runs seeded draws of k environments (without replacement) from pool, LOPO-CV each.
ControlReport random_subset_control(const PreparedCorpus& prepared, std::span<const std::string> pool,
                                    std::size_t k, std::size_t n_runs, std::uint64_t seed,
                                    const ModelConfig& config, std::string label = "control");

struct SweepRow {
    double lambda = 0.0;
    std::string subset;
    double mean_accuracy = 0.0;
    Interval ci;
    long long n_features = 0;
    bool zero_features = false;
    bool computable = true;

    bool operator==(const SweepRow&) const = default;
};

/// For each lambda and each subset (inliers, outliers): mask on training folds, LOPO-CV.
std::vector<SweepRow> lambda_sweep(const PreparedCorpus& prepared, const ocsvm::Partition& partition,
                                   std::span<const double> lambdas, const ModelConfig& config);

/// Sweep over one explicit environment subset.
std::vector<SweepRow> lambda_sweep(const PreparedCorpus& prepared, std::span<const std::string> envs,
                                   const std::string& subset, std::span<const double> lambdas,
                                   const ModelConfig& config);

/// "start:stop:step", endpoints inclusive within 1e-12; also accepts a comma list.
std::vector<double> parse_lambda_grid(const std::string& text);

}  // namespace affinv::eval
