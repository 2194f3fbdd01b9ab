#include "affinv/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "affinv/error.hpp"
#include "affinv/log.hpp"

namespace affinv::ocsvm {

double Kernel::operator()(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const {
    return kernel_eval(a, b, *this);
}

std::string to_string(Kernel::Type type) { return type == Kernel::Type::Rbf ? "rbf" : "linear"; }

Kernel::Type kernel_type_from_string(const std::string& name) {
    if (name == "rbf") return Kernel::Type::Rbf;
    if (name == "linear") return Kernel::Type::Linear;
    throw InvalidInput(fmt::format("unknown kernel '{}' (expected rbf or linear)", name));
}

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                   const Kernel& kernel) {
    if (a.size() != b.size())
        throw InvalidInput(fmt::format("kernel_eval: length mismatch ({} vs {})", a.size(), b.size()));
    if (kernel.type == Kernel::Type::Linear) return a.dot(b);
    return std::exp(-kernel.gamma * (a - b).squaredNorm());
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& x, const Kernel& kernel) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd q(n, n);
    if (kernel.type == Kernel::Type::Linear) {
        q.noalias() = x * x.transpose();
        return q;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        q(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = std::exp(-kernel.gamma * (x.row(i) - x.row(j)).squaredNorm());
            q(i, j) = v;
            q(j, i) = v;
        }
    }
    return q;
}

double kkt_violation(const Eigen::VectorXd& alpha, const Eigen::VectorXd& gradient, double upper) {
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < alpha.size(); ++t) {
        if (alpha(t) < upper) up = std::max(up, -gradient(t));
        if (alpha(t) > 0.0) low = std::min(low, -gradient(t));
    }
    if (!std::isfinite(up) || !std::isfinite(low)) return 0.0;
    return std::max(0.0, up - low);
}

double offset_from_dual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& gradient, double upper) {
    double free_sum = 0.0;
    std::size_t n_free = 0;
    double lb = -std::numeric_limits<double>::infinity();  // from alpha == C: G <= rho
    double ub = std::numeric_limits<double>::infinity();   // from alpha == 0: G >= rho
    for (Eigen::Index t = 0; t < alpha.size(); ++t) {
        if (alpha(t) > 0.0 && alpha(t) < upper) {
            free_sum += gradient(t);
            ++n_free;
        } else if (alpha(t) >= upper) {
            lb = std::max(lb, gradient(t));
        } else {
            ub = std::min(ub, gradient(t));
        }
    }
    if (n_free > 0) return free_sum / static_cast<double>(n_free);
    if (!std::isfinite(lb)) return ub;
    if (!std::isfinite(ub)) return lb;
    return 0.5 * (lb + ub);
}

DualSolution solve_dual(const Eigen::MatrixXd& q, double nu, const SolverOptions& options) {
    const Eigen::Index n = q.rows();
    if (q.cols() != n || n < 1) throw InvalidInput("solve_dual: Q must be square and non-empty");
    if (!(nu > 0.0 && nu <= 1.0)) throw InvalidInput(fmt::format("solve_dual: nu must lie in (0,1], got {}", nu));

    const double upper = 1.0 / (nu * static_cast<double>(n));
    DualSolution sol;
    sol.upper = upper;
    sol.alpha = Eigen::VectorXd::Zero(n);

    // Feasible start: as many alphas at the upper bound as fit, remainder on the next one.
    double remaining = 1.0;
    for (Eigen::Index t = 0; t < n && remaining > 0.0; ++t) {
        const double a = std::min(upper, remaining);
        sol.alpha(t) = a;
        remaining -= a;
    }

    sol.gradient = q * sol.alpha;
    const std::size_t max_iter = options.max_iter > 0 ? options.max_iter : 10000 * static_cast<std::size_t>(n);
    constexpr double kTau = 1e-12;

    std::size_t iter = 0;
    for (;;) {
        // i: maximal -G among those that can grow.
        Eigen::Index i = -1;
        double g_max = -std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t)
            if (sol.alpha(t) < upper && -sol.gradient(t) > g_max) {
                g_max = -sol.gradient(t);
                i = t;
            }
        // j: second-order choice among those that can shrink.
        Eigen::Index j = -1;
        double g_min = std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t) {
            if (!(sol.alpha(t) > 0.0)) continue;
            g_min = std::min(g_min, -sol.gradient(t));
            if (i < 0) continue;
            const double b = g_max + sol.gradient(t);
            if (b <= 0.0) continue;
            double a = q(i, i) + q(t, t) - 2.0 * q(i, t);
            if (a <= 0.0) a = kTau;
            const double obj = -(b * b) / a;
            if (obj < best) {
                best = obj;
                j = t;
            }
        }

        const double violation = (i < 0 || !std::isfinite(g_min)) ? 0.0 : std::max(0.0, g_max - g_min);
        if (violation < options.eps || j < 0) {
            // Refresh the gradient to remove accumulated drift before accepting.
            sol.gradient = q * sol.alpha;
            const double fresh = kkt_violation(sol.alpha, sol.gradient, upper);
            if (fresh < options.eps || j < 0) {
                sol.diagnostics.kkt_residual = fresh;
                break;
            }
            continue;
        }
        if (iter >= max_iter) {
            sol.diagnostics.iterations = iter;
            sol.diagnostics.kkt_residual = violation;
            throw ConvergenceError(
                fmt::format("one-class SVM did not converge in {} iterations (KKT residual {:.3e})", iter, violation),
                violation, iter);
        }
        ++iter;

        double a = q(i, i) + q(j, j) - 2.0 * q(i, j);
        if (a <= 0.0) a = kTau;
        double delta = (sol.gradient(j) - sol.gradient(i)) / a;
        const double room_i = upper - sol.alpha(i);
        const double room_j = sol.alpha(j);
        bool clip_i = false, clip_j = false;
        if (delta >= room_i) {
            delta = room_i;
            clip_i = true;
        }
        if (delta >= room_j) {
            delta = room_j;
            clip_j = true;
            clip_i = clip_i && room_i == room_j;
        }
        if (delta <= 0.0) {
            // Cannot happen for a genuine violating pair; refresh and retry.
            sol.gradient = q * sol.alpha;
            continue;
        }
        sol.alpha(i) = clip_i ? upper : sol.alpha(i) + delta;
        sol.alpha(j) = clip_j ? 0.0 : sol.alpha(j) - delta;
        sol.gradient += delta * (q.col(i) - q.col(j));
    }
    sol.diagnostics.iterations = iter;
    sol.rho = offset_from_dual(sol.alpha, sol.gradient, upper);
    return sol;
}

double OcsvmModel::decision(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (support.rows() > 0 && x.size() != support.cols())
        throw InvalidInput(fmt::format("decision: point has {} coordinates, model expects {}", x.size(), support.cols()));
    double s = 0.0;
    for (Eigen::Index k = 0; k < support.rows(); ++k) s += alphas(k) * kernel_eval(support.row(k).transpose(), x, kernel);
    const double value = s - rho;
    return std::abs(value) <= tie_tolerance ? 0.0 : value;
}

Eigen::VectorXd OcsvmModel::decisions(const Eigen::MatrixXd& rows) const {
    Eigen::VectorXd out(rows.rows());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) out(r) = decision(rows.row(r).transpose());
    return out;
}

OcsvmModel train(const Eigen::MatrixXd& x, double nu, const Kernel& kernel, const SolverOptions& options) {
    if (x.rows() < 2) throw InvalidInput(fmt::format("ocsvm::train: need at least 2 rows, got {}", x.rows()));
    if (!(nu > 0.0 && nu <= 1.0)) throw InvalidInput(fmt::format("ocsvm::train: nu must lie in (0,1], got {}", nu));
    if (kernel.type == Kernel::Type::Rbf && !(kernel.gamma > 0.0))
        throw InvalidInput(fmt::format("ocsvm::train: RBF gamma must be positive, got {}", kernel.gamma));
    if (!x.allFinite()) throw InvalidInput("ocsvm::train: non-finite input");

    const auto sol = solve_dual(gram_matrix(x, kernel), nu, options);

    OcsvmModel model;
    model.kernel = kernel;
    model.nu = nu;
    model.rho = sol.rho;
    model.n_train = static_cast<std::size_t>(x.rows());
    model.diagnostics = sol.diagnostics;
    model.tie_tolerance = std::max(OcsvmModel::kTieTolerance, options.eps) * std::max(1.0, std::abs(sol.rho));
    const auto n_sv = (sol.alpha.array() > 0.0).count();
    model.support.resize(n_sv, x.cols());
    model.alphas.resize(n_sv);
    Eigen::Index k = 0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        if (sol.alpha(t) > 0.0) {
            model.support.row(k) = x.row(t);
            model.alphas(k) = sol.alpha(t);
            ++k;
        }
    }
    return model;
}

// ---------------------------------------------------------------------------

std::vector<std::string> Partition::inliers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < env_ids.size(); ++i)
        if (!outlier[i]) out.push_back(env_ids[i]);
    return out;
}

std::vector<std::string> Partition::outliers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < env_ids.size(); ++i)
        if (outlier[i]) out.push_back(env_ids[i]);
    return out;
}

bool Partition::is_outlier(const std::string& env_id) const {
    for (std::size_t i = 0; i < env_ids.size(); ++i)
        if (env_ids[i] == env_id) return outlier[i];
    throw InvalidInput(fmt::format("partition has no environment '{}'", env_id));
}

Partition partition_environments(const SignMatrix& representations, const DetectConfig& config) {
    Partition p;
    p.env_ids = representations.env_ids;
    const std::size_t n = representations.rows();
    if (!(config.nu > 0.0 && config.nu <= 1.0))
        throw InvalidInput(fmt::format("detect: nu must lie in (0,1], got {}", config.nu));
    if (n < 3) {
        log::warn(fmt::format("detect: only {} environments; one-class estimation skipped, all are inliers", n));
        p.scores.assign(n, 0.0);
        p.outlier.assign(n, false);
        p.short_circuited = true;
        return p;
    }
    Kernel kernel = config.kernel == Kernel::Type::Linear
                        ? Kernel::linear()
                        : Kernel::rbf(config.gamma.value_or(1.0 / static_cast<double>(std::max<std::size_t>(1, representations.dim()))));
    const auto model = train(representations.values, config.nu, kernel, config.solver);
    p.diagnostics = model.diagnostics;
    p.scores.resize(n);
    p.outlier.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        p.scores[i] = model.decision(representations.values.row(static_cast<Eigen::Index>(i)).transpose());
        p.outlier[i] = p.scores[i] < 0.0;
    }
    return p;
}

Partition detect_outliers(const Corpus& corpus, const DetectConfig& config) {
    return partition_environments(representation_matrix(corpus, config.pairs, config.signs), config);
}

}  // namespace affinv::ocsvm
