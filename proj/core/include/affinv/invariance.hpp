#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "affinv/correlation.hpp"

namespace affinv {

struct SignCounts {
    std::vector<int> pos;
    std::vector<int> neg;
};

/// Per-feature number of rows with +1 / -1. Entries must be in {-1,0,1}.
SignCounts count_signs(const Eigen::MatrixXd& rows);

/// Features whose correlation sign agrees across at least a lambda fraction of environments.
struct InvariantMask {
    std::vector<int> c_pos;
    std::vector<int> c_neg;
    double lambda = 0.0;
    std::size_t n_envs = 0;
    std::vector<std::size_t> selected;  // sorted ascending

    std::size_t dim() const noexcept { return c_pos.size(); }
    bool contains(std::size_t feature) const;
    bool operator==(const InvariantMask&) const = default;
};

/// Feature i is selected iff max(c_pos, c_neg) >= lambda * n_envs (exact real comparison)
/// and it carries a nonzero sign in at least one environment.
InvariantMask select_invariant(const SignCounts& counts, double lambda, std::size_t n_envs);

/// count_signs + select_invariant over every row of `rows`.
InvariantMask invariant_mask(const SignMatrix& rows, double lambda);

}  // namespace affinv
