#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "affinv/corpus.hpp"
#include "affinv/ocsvm.hpp"

namespace affinv::synth {

/// Parameters of a synthetic multi-environment corpus.
///
/// Each window has a latent arousal driver z ~ N(0,1). Its features are
/// x = z * beta_e + N(0, I) and its raw arousal is logistic(z + noise_sd * N(0,1)),
/// min-max normalized per session. On the invariant features the loading beta_e
/// carries a shared signed coefficient; outlier environments flip the sign of
/// flip_fraction of those. Every other feature gets an environment-specific
/// N(0, spurious_sd^2) loading.
struct SynthSpec {
    std::size_t n_envs = 50;
    std::size_t n_outliers = 16;
    std::size_t sessions_per_env = 1;
    std::size_t windows_per_session = 40;
    std::size_t d = 768;
    std::size_t n_invariant = 150;
    double flip_fraction = 0.6;
    double noise_sd = 0.1;
    double spurious_sd = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SynthSpec&) const = default;
};

struct GroundTruth {
    std::vector<std::string> env_ids;
    std::vector<std::string> outlier_env_ids;          // sorted
    std::vector<std::size_t> invariant_features;       // sorted
    std::vector<double> shared_coefficients;           // one per invariant feature
    Eigen::MatrixXd coefficients;                      // n_envs x d loadings

    bool is_outlier(const std::string& env_id) const;
};

struct SynthCorpus {
    Corpus corpus;
    GroundTruth truth;
};

/// Deterministic in spec (including seed); environments use order-independent sub-seeds.
SynthCorpus generate(const SynthSpec& spec);

struct DetectionScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Set-overlap metrics of the predicted outlier set. An empty prediction has precision 1.
DetectionScore score_detection(const ocsvm::Partition& partition, const GroundTruth& truth);

}  // namespace affinv::synth
