#include "affinv/invariance.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "affinv/error.hpp"

namespace affinv {

SignCounts count_signs(const Eigen::MatrixXd& rows) {
    const auto d = static_cast<std::size_t>(rows.cols());
    SignCounts counts{std::vector<int>(d, 0), std::vector<int>(d, 0)};
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            const double v = rows(r, j);
            if (v == 1.0) ++counts.pos[static_cast<std::size_t>(j)];
            else if (v == -1.0) ++counts.neg[static_cast<std::size_t>(j)];
            else if (v != 0.0)
                throw InvalidInput(fmt::format("count_signs: entry ({}, {}) = {} is not in {{-1,0,1}}", r, j, v));
        }
    }
    return counts;
}

bool InvariantMask::contains(std::size_t feature) const {
    return std::binary_search(selected.begin(), selected.end(), feature);
}

InvariantMask select_invariant(const SignCounts& counts, double lambda, std::size_t n_envs) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidInput(fmt::format("select_invariant: lambda must lie in [0,1], got {}", lambda));
    if (n_envs < 1) throw InvalidInput("select_invariant: n_envs must be >= 1");
    if (counts.pos.size() != counts.neg.size()) throw InvalidInput("select_invariant: count vectors differ in length");

    InvariantMask mask{counts.pos, counts.neg, lambda, n_envs, {}};
    const double threshold = lambda * static_cast<double>(n_envs);
    for (std::size_t i = 0; i < counts.pos.size(); ++i) {
        const int pos = counts.pos[i];
        const int neg = counts.neg[i];
        if (pos < 0 || neg < 0 || static_cast<std::size_t>(pos + neg) > n_envs)
            throw InvalidInput(fmt::format("select_invariant: counts ({}, {}) for feature {} exceed {} environments", pos,
                                           neg, i, n_envs));
        if (pos + neg == 0) continue;  // zero or undefined everywhere
        if (static_cast<double>(std::max(pos, neg)) >= threshold) mask.selected.push_back(i);
    }
    return mask;
}

InvariantMask invariant_mask(const SignMatrix& rows, double lambda) {
    return select_invariant(count_signs(rows.values), lambda, rows.rows());
}

}  // namespace affinv
