#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "affinv/corpus.hpp"

namespace affinv::pref {

struct TrainOptions {
    double reg = 1e-4;               // L2 coefficient on the weights (bias unpenalized)
    double tol = 1e-6;               // stop when |grad|_inf <= tol
    std::size_t max_iter = 10000;
    bool standardize = true;         // z-score each difference feature with training statistics
    bool record_loss_trace = false;

    bool operator==(const TrainOptions&) const = default;
};

/// Training pairs restricted to a feature subset, kept in factored window form.
///
/// Row p of the (standardized) design is (W[first_p] - W[second_p] - center) / scale.
class PairDesign {
public:
    PairDesign(std::span<const PairSet> pairs, std::vector<std::size_t> features, bool standardize);
    /// Reuses given statistics instead of estimating them.
    PairDesign(std::span<const PairSet> pairs, std::vector<std::size_t> features, Eigen::VectorXd center,
               Eigen::VectorXd scale);

    std::size_t n_pairs() const noexcept { return labels_.size(); }
    std::size_t n_features() const noexcept { return features_.size(); }
    const std::vector<std::size_t>& features() const noexcept { return features_; }
    const Eigen::VectorXd& center() const noexcept { return center_; }
    const Eigen::VectorXd& scale() const noexcept { return scale_; }
    const std::vector<double>& labels() const noexcept { return labels_; }

    /// z_p = x_p . w + b for every pair.
    Eigen::VectorXd scores(const Eigen::VectorXd& w, double b) const;
    /// sum_p r_p x_p.
    Eigen::VectorXd transpose_times(const Eigen::VectorXd& r) const;
    /// Dense standardized design matrix (tests and small problems).
    Eigen::MatrixXd dense() const;

private:
    void gather(std::span<const PairSet> pairs);
    void estimate_statistics(bool standardize);

    std::vector<std::size_t> features_;
    Eigen::MatrixXd windows_;  // selected columns only
    std::vector<int> first_;
    std::vector<int> second_;
    std::vector<double> labels_;
    Eigen::VectorXd center_;
    Eigen::VectorXd scale_;
};

/// Mean logistic loss + (reg/2)|w|^2 over a PairDesign. Parameters are [w; b].
class PreferenceObjective {
public:
    PreferenceObjective(const PairDesign& design, double reg) : design_(&design), reg_(reg) {}

    std::size_t n_params() const noexcept { return design_->n_features() + 1; }
    double value(const Eigen::VectorXd& params) const;
    double value_and_gradient(const Eigen::VectorXd& params, Eigen::VectorXd& gradient) const;

private:
    const PairDesign* design_;
    double reg_;
};

struct TrainDiagnostics {
    std::size_t iterations = 0;
    double final_loss = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    std::vector<double> loss_trace;
};

struct Prediction {
    int label = 0;
    double probability = 0.5;
};

/// Linear preference model over difference vectors.
struct PrefModel {
    std::size_t dim = 0;                 // corpus feature dimension
    bool masked = false;                 // false: all features
    std::vector<std::size_t> features;   // selected feature indices (all of 0..dim-1 when unmasked)
    Eigen::VectorXd weights;             // standardized-space weights, one per selected feature
    double bias = 0.0;
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    double reg = 0.0;
    TrainDiagnostics diagnostics;

    bool zero_features() const noexcept { return features.empty(); }
    double score(const Eigen::Ref<const Eigen::VectorXd>& diff) const;
    /// probability = sigmoid(score); label = 1 iff probability >= 0.5.
    Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& diff) const;
    /// Scores for every pair of a PairSet (factored evaluation).
    Eigen::VectorXd scores(const PairSet& pairs) const;
};

double sigmoid(double z) noexcept;

/// Full-batch gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
/// `mask`: selected feature indices, or nullopt for all features.
PrefModel train(std::span<const PairSet> pairs, const std::optional<std::vector<std::size_t>>& mask,
                const TrainOptions& options = {});

/// Fraction of pairs whose predicted label equals the true label.
double accuracy(const PrefModel& model, std::span<const PairSet> pairs);

}  // namespace affinv::pref
