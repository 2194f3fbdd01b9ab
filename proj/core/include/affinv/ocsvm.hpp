#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "affinv/corpus.hpp"
#include "affinv/correlation.hpp"

namespace affinv::ocsvm {

struct Kernel {
    enum class Type { Rbf, Linear };

    Type type = Type::Rbf;
    double gamma = 1.0;  // RBF only

    static Kernel rbf(double gamma) { return Kernel{Type::Rbf, gamma}; }
    static Kernel linear() { return Kernel{Type::Linear, 0.0}; }

    double operator()(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const;
    bool operator==(const Kernel&) const = default;
};

std::string to_string(Kernel::Type type);
Kernel::Type kernel_type_from_string(const std::string& name);

/// exp(-gamma * |a-b|^2) or a.b; throws on length mismatch.
double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                   const Kernel& kernel);

/// Dense kernel (Gram) matrix of the rows of x.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& x, const Kernel& kernel);

struct SolverOptions {
    double eps = 1e-9;          // stop when the maximal KKT violation drops below eps
    std::size_t max_iter = 0;   // 0 means 10^4 * n

    bool operator==(const SolverOptions&) const = default;
};

struct SolverDiagnostics {
    std::size_t iterations = 0;
    double kkt_residual = 0.0;

    bool operator==(const SolverDiagnostics&) const = default;
};

/// Trained nu-one-class SVM. decision(x) = sum_i alpha_i k(s_i, x) - rho, with
/// sum alpha = 1 and 0 <= alpha_i <= 1/(nu n).
struct OcsvmModel {
    Eigen::MatrixXd support;   // support points, row-wise
    Eigen::VectorXd alphas;    // one per support row
    double rho = 0.0;
    Kernel kernel;
    double nu = 0.5;
    std::size_t n_train = 0;
    SolverDiagnostics diagnostics;
    /// |decision| at or below this is reported as 0 (a boundary point, hence an inlier).
    /// Set by train() to max(kTieTolerance, solver eps) * max(1, |rho|).
    double tie_tolerance = kTieTolerance;

    /// Decision value, snapped to exactly 0 within tie_tolerance.
    double decision(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd decisions(const Eigen::MatrixXd& rows) const;

    static constexpr double kTieTolerance = 1e-10;
};

/// Full dual solution, including the zero alphas. Exposed for verification.
struct DualSolution {
    Eigen::VectorXd alpha;
    Eigen::VectorXd gradient;  // Q alpha
    double rho = 0.0;
    double upper = 0.0;        // 1/(nu n)
    SolverDiagnostics diagnostics;
};

/// SMO with maximal-violating-pair / second-order working-set selection over a precomputed Q.
DualSolution solve_dual(const Eigen::MatrixXd& q, double nu, const SolverOptions& options = {});

/// Largest KKT violation of a feasible alpha: max_{a_i<C}(-G_i) - min_{a_j>0}(-G_j), floored at 0.
double kkt_violation(const Eigen::VectorXd& alpha, const Eigen::VectorXd& gradient, double upper);

/// rho from a dual solution: mean gradient over free alphas, else the midpoint of the feasible interval.
double offset_from_dual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& gradient, double upper);

/// Trains on the rows of x. Throws InvalidInput for n < 2 or nu outside (0,1],
/// ConvergenceError when max_iter is reached.
OcsvmModel train(const Eigen::MatrixXd& x, double nu, const Kernel& kernel, const SolverOptions& options = {});

// ---------------------------------------------------------------------------
// Environment partitioning

struct DetectConfig {
    PairConfig pairs;
    SignConfig signs;
    double nu = 0.3;
    Kernel::Type kernel = Kernel::Type::Rbf;
    std::optional<double> gamma;  // default 1/d
    SolverOptions solver;

    bool operator==(const DetectConfig&) const = default;
};

struct Partition {
    std::vector<std::string> env_ids;  // corpus order
    std::vector<double> scores;
    std::vector<bool> outlier;         // scores[i] < 0
    SolverDiagnostics diagnostics;
    bool short_circuited = false;      // fewer than 3 environments: everything is an inlier

    std::size_t size() const noexcept { return env_ids.size(); }
    std::vector<std::string> inliers() const;
    std::vector<std::string> outliers() const;
    bool is_outlier(const std::string& env_id) const;

    bool operator==(const Partition&) const = default;
};

/// Scores each row of a sign matrix with a One-Class SVM trained on all rows.
Partition partition_environments(const SignMatrix& representations, const DetectConfig& config);

/// Pairs -> sign vectors -> One-Class SVM -> inlier/outlier partition.
Partition detect_outliers(const Corpus& corpus, const DetectConfig& config);

}  // namespace affinv::ocsvm
