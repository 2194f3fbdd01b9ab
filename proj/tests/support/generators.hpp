#pragma once

// Seeded random instance generators for property tests.

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "affinv/corpus.hpp"

namespace affinv::test {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::mt19937_64& rng() { return rng_; }
    std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

    std::vector<double> normals(std::size_t n, double sd = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(sd);
        return v;
    }

    /// Binary labels with both classes present (n >= 2).
    std::vector<double> binary_labels(std::size_t n) {
        std::vector<double> y(n);
        const double p = uniform(0.1, 0.9);
        for (auto& v : y) v = coin(p) ? 1.0 : 0.0;
        y[0] = 1.0;
        y[1] = 0.0;
        std::shuffle(y.begin(), y.end(), rng_);
        return y;
    }

    Eigen::MatrixXd normal_matrix(std::size_t rows, std::size_t cols, double sd = 1.0) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(sd);
        return m;
    }

    /// Entries in {-1,0,1}; zeros with probability zero_p.
    Eigen::MatrixXd sign_matrix(std::size_t rows, std::size_t cols, double zero_p) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = coin(zero_p) ? 0.0 : (coin() ? 1.0 : -1.0);
        return m;
    }

    /// Window labels in [0,1]; sometimes quantized so ties and boundary differences occur.
    std::vector<double> window_labels(std::size_t n) {
        std::vector<double> y(n);
        const bool quantized = coin(0.5);
        for (auto& v : y) v = quantized ? static_cast<double>(size(0, 20)) / 20.0 : uniform(0.0, 1.0);
        return y;
    }

    Session session(std::size_t windows, std::size_t d, const std::string& id = "s0") {
        const auto labels = window_labels(windows);
        return Session(id, normal_matrix(windows, d), Eigen::Map<const Eigen::VectorXd>(labels.data(), windows));
    }

    Environment environment(const std::string& id, std::size_t sessions, std::size_t windows, std::size_t d) {
        Environment e;
        e.id = id;
        for (std::size_t s = 0; s < sessions; ++s) e.sessions.push_back(session(windows, d, fmt::format("s{}", s)));
        return e;
    }

private:
    std::mt19937_64 rng_;
};

/// Unique empty directory under the system temp dir; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                fmt::format("affinv-{}-{}-{}", tag, static_cast<unsigned long>(::getpid()), counter++);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace affinv::test
