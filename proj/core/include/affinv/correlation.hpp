#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "affinv/corpus.hpp"

namespace affinv {

/// Sample Pearson correlation. nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Point-biserial correlation of x against 0/1 labels y, using the population
/// standard deviation of x. Equals pearson(x, y) exactly in exact arithmetic.
/// nullopt when x has zero variance or y has a single class.
std::optional<double> point_biserial(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value for H0: r = 0 given n samples (Student t with n-2 dof).
double correlation_p_value(double r, std::size_t n);

struct SignConfig {
    double zero_tol = 1e-12;  // |r| <= zero_tol counts as zero
    double p_value_gate = 0.0;  // > 0: correlations with p >= gate map to 0. Off by default.

    bool operator==(const SignConfig&) const = default;
};

/// d-dimensional {-1,0,+1} summary of the feature/label correlation signs of one environment.
struct SignVector {
    std::string env_id;
    std::vector<std::int8_t> signs;

    bool operator==(const SignVector&) const = default;
};

int correlation_sign(std::optional<double> r, std::size_t n, const SignConfig& config = {});

SignVector sign_vector(const PairSet& pairs, const SignConfig& config = {});

/// Environments stacked row-wise (one row per environment, entries in {-1,0,1}).
struct SignMatrix {
    std::vector<std::string> env_ids;
    Eigen::MatrixXd values;

    std::size_t rows() const noexcept { return env_ids.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(values.cols()); }
    /// Rows for the given environments, in the order given.
    SignMatrix subset(std::span<const std::string> ids) const;
};

SignMatrix stack_signs(std::span<const SignVector> vectors);

/// Row e = sign_vector(pairset of environment e), in corpus environment order.
/// `pairsets` are matched by env_id; a missing environment is an error.
SignMatrix representation_matrix(const Corpus& corpus, std::span<const PairSet> pairsets,
                                 const SignConfig& config = {});

/// Builds each environment's pairs on the fly (one environment in memory at a time).
SignMatrix representation_matrix(const Corpus& corpus, const PairConfig& pairs,
                                 const SignConfig& config = {});

}  // namespace affinv
