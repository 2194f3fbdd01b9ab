#include "affinv/correlation.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "affinv/error.hpp"

namespace affinv {

namespace {

bool is_constant(std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void check_lengths(std::span<const double> x, std::span<const double> y, const char* who) {
    if (x.size() != y.size())
        throw InvalidInput(fmt::format("{}: length mismatch ({} vs {})", who, x.size(), y.size()));
    if (x.size() < 2) throw InvalidInput(fmt::format("{}: need at least 2 samples, got {}", who, x.size()));
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    check_lengths(x, y, "pearson");
    if (is_constant(x) || is_constant(y)) return std::nullopt;
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> point_biserial(std::span<const double> x, std::span<const double> y) {
    check_lengths(x, y, "point_biserial");
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1.0) ++n1;
        else if (y[i] != 0.0)
            throw InvalidInput(fmt::format("point_biserial: label {} at index {} is not 0 or 1", y[i], i));
    }
    const std::size_t n = x.size();
    const std::size_t n0 = n - n1;
    if (n1 == 0 || n0 == 0 || is_constant(x)) return std::nullopt;

    // Group means taken on centred values so a large common offset cancels exactly.
    const double mx = mean(x);
    double ss = 0.0, sum1 = 0.0, sum0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = x[i] - mx;
        ss += c * c;
        (y[i] == 1.0 ? sum1 : sum0) += c;
    }
    if (ss == 0.0) return std::nullopt;
    const double nd = static_cast<double>(n);
    const double s_n = std::sqrt(ss / nd);
    const double m1 = sum1 / static_cast<double>(n1);
    const double m0 = sum0 / static_cast<double>(n0);
    const double r = (m1 - m0) / s_n * std::sqrt(static_cast<double>(n1) * static_cast<double>(n0) / (nd * nd));
    return std::clamp(r, -1.0, 1.0);
}

double correlation_p_value(double r, std::size_t n) {
    if (n <= 2) return 1.0;
    const double ar = std::abs(r);
    if (ar >= 1.0) return 0.0;
    const double dof = static_cast<double>(n - 2);
    const double t = ar * std::sqrt(dof / (1.0 - ar * ar));
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

int correlation_sign(std::optional<double> r, std::size_t n, const SignConfig& config) {
    if (!r) return 0;
    if (std::abs(*r) <= config.zero_tol) return 0;
    if (config.p_value_gate > 0.0 && correlation_p_value(*r, n) >= config.p_value_gate) return 0;
    return *r > 0.0 ? 1 : -1;
}

SignVector sign_vector(const PairSet& pairs, const SignConfig& config) {
    if (pairs.empty()) throw InvalidInput(fmt::format("sign_vector: environment '{}' has no pairs", pairs.env_id()));
    SignVector out{pairs.env_id(), std::vector<std::int8_t>(pairs.dim(), 0)};
    const auto& labels = pairs.labels();
    if (pairs.size() < 2) return out;  // correlation undefined for a single pair
    for (std::size_t j = 0; j < pairs.dim(); ++j) {
        const Eigen::VectorXd col = pairs.diff_column(j);
        const auto r = point_biserial(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), labels);
        out.signs[j] = static_cast<std::int8_t>(correlation_sign(r, pairs.size(), config));
    }
    return out;
}

SignMatrix SignMatrix::subset(std::span<const std::string> ids) const {
    SignMatrix out;
    out.values.resize(static_cast<Eigen::Index>(ids.size()), values.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = std::find(env_ids.begin(), env_ids.end(), ids[i]);
        if (it == env_ids.end()) throw InvalidInput(fmt::format("sign matrix has no environment '{}'", ids[i]));
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(it - env_ids.begin());
        out.env_ids.push_back(ids[i]);
    }
    return out;
}

SignMatrix stack_signs(std::span<const SignVector> vectors) {
    SignMatrix out;
    const std::size_t d = vectors.empty() ? 0 : vectors.front().signs.size();
    out.values.resize(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].signs.size() != d) throw InvalidInput("stack_signs: sign vectors differ in length");
        for (std::size_t j = 0; j < d; ++j)
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i].signs[j];
        out.env_ids.push_back(vectors[i].env_id);
    }
    return out;
}

SignMatrix representation_matrix(const Corpus& corpus, std::span<const PairSet> pairsets, const SignConfig& config) {
    std::vector<SignVector> rows;
    rows.reserve(corpus.size());
    for (const auto& env : corpus.environments()) {
        auto it = std::find_if(pairsets.begin(), pairsets.end(), [&](const PairSet& p) { return p.env_id() == env.id; });
        if (it == pairsets.end())
            throw InvalidInput(fmt::format("representation_matrix: no PairSet for environment '{}'", env.id));
        rows.push_back(sign_vector(*it, config));
    }
    return stack_signs(rows);
}

SignMatrix representation_matrix(const Corpus& corpus, const PairConfig& pairs, const SignConfig& config) {
    std::vector<SignVector> rows;
    rows.reserve(corpus.size());
    for (const auto& env : corpus.environments()) rows.push_back(sign_vector(build_pairs(env, pairs), config));
    return stack_signs(rows);
}

}  // namespace affinv
