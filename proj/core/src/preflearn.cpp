#include "affinv/preflearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "affinv/error.hpp"
#include "affinv/log.hpp"

namespace affinv::pref {

namespace {

/// Mean of softplus(z) - y z, and optionally the per-pair residual sigmoid(z) - y.
double logistic_loss(const Eigen::VectorXd& z, const std::vector<double>& labels, Eigen::VectorXd* residual) {
    const Eigen::Map<const Eigen::ArrayXd> y(labels.data(), static_cast<Eigen::Index>(labels.size()));
    const Eigen::ArrayXd e = (-z.array().abs()).exp();
    const double loss = (z.array().max(0.0) + e.log1p() - y * z.array()).sum();
    if (residual) {
        const Eigen::ArrayXd inv = (1.0 + e).inverse();
        *residual = ((z.array() >= 0.0).select(inv, e * inv) - y).matrix();
    }
    return loss;
}

std::size_t common_dim(std::span<const PairSet> pairs) {
    std::size_t d = 0;
    bool have = false;
    for (const auto& p : pairs) {
        if (!have) {
            d = p.dim();
            have = true;
        } else if (p.dim() != d) {
            throw InvalidInput(fmt::format("pair sets differ in dimension ({} vs {})", p.dim(), d));
        }
    }
    return d;
}

}  // namespace

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// PairDesign

PairDesign::PairDesign(std::span<const PairSet> pairs, std::vector<std::size_t> features, bool standardize)
    : features_(std::move(features)) {
    gather(pairs);
    estimate_statistics(standardize);
}

PairDesign::PairDesign(std::span<const PairSet> pairs, std::vector<std::size_t> features, Eigen::VectorXd center,
                       Eigen::VectorXd scale)
    : features_(std::move(features)), center_(std::move(center)), scale_(std::move(scale)) {
    if (static_cast<std::size_t>(center_.size()) != features_.size() ||
        static_cast<std::size_t>(scale_.size()) != features_.size())
        throw InvalidInput("PairDesign: statistics do not match the feature count");
    gather(pairs);
}

void PairDesign::gather(std::span<const PairSet> pairs) {
    const std::size_t d = common_dim(pairs);
    for (auto f : features_)
        if (f >= d) throw InvalidInput(fmt::format("feature index {} out of range for dimension {}", f, d));
    Eigen::Index total_windows = 0;
    std::size_t total_pairs = 0;
    for (const auto& p : pairs) {
        total_windows += p.windows().rows();
        total_pairs += p.size();
    }
    const auto k = static_cast<Eigen::Index>(features_.size());
    windows_.resize(total_windows, k);
    first_.reserve(total_pairs);
    second_.reserve(total_pairs);
    labels_.reserve(total_pairs);
    Eigen::Index offset = 0;
    for (const auto& p : pairs) {
        const auto& w = p.windows();
        for (Eigen::Index c = 0; c < k; ++c)
            windows_.col(c).segment(offset, w.rows()) = w.col(static_cast<Eigen::Index>(features_[static_cast<std::size_t>(c)]));
        for (std::size_t q = 0; q < p.size(); ++q) {
            first_.push_back(p.first()[q] + static_cast<int>(offset));
            second_.push_back(p.second()[q] + static_cast<int>(offset));
            labels_.push_back(p.labels()[q]);
        }
        offset += w.rows();
    }
}

void PairDesign::estimate_statistics(bool standardize) {
    const auto k = static_cast<Eigen::Index>(features_.size());
    center_ = Eigen::VectorXd::Zero(k);
    scale_ = Eigen::VectorXd::Ones(k);
    if (!standardize || labels_.empty()) return;
    const double n = static_cast<double>(labels_.size());
    const Eigen::MatrixXd by_window = windows_.transpose();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    for (std::size_t p = 0; p < first_.size(); ++p) sum += by_window.col(first_[p]) - by_window.col(second_[p]);
    const Eigen::VectorXd mean = sum / n;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(k);
    for (std::size_t p = 0; p < first_.size(); ++p)
        ss += (by_window.col(first_[p]) - by_window.col(second_[p]) - mean).cwiseAbs2();
    center_ = mean;
    for (Eigen::Index c = 0; c < k; ++c) {
        const double sd = std::sqrt(ss(c) / n);
        scale_(c) = sd > 0.0 ? sd : 1.0;
    }
}

Eigen::VectorXd PairDesign::scores(const Eigen::VectorXd& w, double b) const {
    const Eigen::VectorXd scaled = w.cwiseQuotient(scale_);
    const Eigen::VectorXd per_window = windows_ * scaled;
    const double shift = b - scaled.dot(center_);
    Eigen::VectorXd z(static_cast<Eigen::Index>(first_.size()));
    for (std::size_t p = 0; p < first_.size(); ++p)
        z(static_cast<Eigen::Index>(p)) = per_window(first_[p]) - per_window(second_[p]) + shift;
    return z;
}

Eigen::VectorXd PairDesign::transpose_times(const Eigen::VectorXd& r) const {
    Eigen::VectorXd per_window = Eigen::VectorXd::Zero(windows_.rows());
    for (std::size_t p = 0; p < first_.size(); ++p) {
        const double v = r(static_cast<Eigen::Index>(p));
        per_window(first_[p]) += v;
        per_window(second_[p]) -= v;
    }
    Eigen::VectorXd g = windows_.transpose() * per_window;
    g -= r.sum() * center_;
    return g.cwiseQuotient(scale_);
}

Eigen::MatrixXd PairDesign::dense() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(first_.size()), windows_.cols());
    for (std::size_t p = 0; p < first_.size(); ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        x.row(row) = ((windows_.row(first_[p]) - windows_.row(second_[p])).transpose() - center_)
                         .cwiseQuotient(scale_)
                         .transpose();
    }
    return x;
}

// ---------------------------------------------------------------------------
// Objective

double PreferenceObjective::value(const Eigen::VectorXd& params) const {
    const auto k = static_cast<Eigen::Index>(design_->n_features());
    const Eigen::VectorXd w = params.head(k);
    const Eigen::VectorXd z = design_->scores(w, params(k));
    const double n = static_cast<double>(z.size());
    return logistic_loss(z, design_->labels(), nullptr) / n + 0.5 * reg_ * w.squaredNorm();
}

double PreferenceObjective::value_and_gradient(const Eigen::VectorXd& params, Eigen::VectorXd& gradient) const {
    const auto k = static_cast<Eigen::Index>(design_->n_features());
    const Eigen::VectorXd w = params.head(k);
    const Eigen::VectorXd z = design_->scores(w, params(k));
    const double n = static_cast<double>(z.size());
    Eigen::VectorXd residual;
    const double loss = logistic_loss(z, design_->labels(), &residual);
    residual /= n;
    gradient.resize(k + 1);
    gradient.head(k) = design_->transpose_times(residual) + reg_ * w;
    gradient(k) = residual.sum();
    return loss / n + 0.5 * reg_ * w.squaredNorm();
}

// ---------------------------------------------------------------------------
// Model

double PrefModel::score(const Eigen::Ref<const Eigen::VectorXd>& diff) const {
    if (static_cast<std::size_t>(diff.size()) != dim)
        throw InvalidInput(fmt::format("predict: difference vector has {} entries, model expects {}", diff.size(), dim));
    double z = bias;
    for (std::size_t c = 0; c < features.size(); ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        z += weights(ci) * (diff(static_cast<Eigen::Index>(features[c])) - center(ci)) / scale(ci);
    }
    return z;
}

Prediction PrefModel::predict(const Eigen::Ref<const Eigen::VectorXd>& diff) const {
    const double p = sigmoid(score(diff));
    return Prediction{p >= 0.5 ? 1 : 0, p};
}

Eigen::VectorXd PrefModel::scores(const PairSet& pairs) const {
    if (pairs.dim() != dim)
        throw InvalidInput(fmt::format("predict: pair set '{}' has dimension {}, model expects {}", pairs.env_id(),
                                       pairs.dim(), dim));
    const PairDesign design(std::span<const PairSet>(&pairs, 1), features, center, scale);
    return design.scores(weights, bias);
}

PrefModel train(std::span<const PairSet> pairs, const std::optional<std::vector<std::size_t>>& mask,
                const TrainOptions& options) {
    std::size_t n_pairs = 0;
    for (const auto& p : pairs) n_pairs += p.size();
    if (n_pairs == 0) throw InvalidInput("pref::train: empty training set");
    if (!(options.reg >= 0.0)) throw InvalidInput(fmt::format("pref::train: reg must be >= 0, got {}", options.reg));
    const std::size_t d = common_dim(pairs);

    PrefModel model;
    model.dim = d;
    model.masked = mask.has_value();
    if (mask) {
        model.features = *mask;
        std::sort(model.features.begin(), model.features.end());
        model.features.erase(std::unique(model.features.begin(), model.features.end()), model.features.end());
    } else {
        model.features.resize(d);
        std::iota(model.features.begin(), model.features.end(), std::size_t{0});
    }
    model.reg = options.reg;

    const PairDesign design(pairs, model.features, options.standardize);
    const PreferenceObjective objective(design, options.reg);
    model.center = design.center();
    model.scale = design.scale();

    const auto n_params = static_cast<Eigen::Index>(objective.n_params());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_params);
    Eigen::VectorXd g;
    double f = objective.value_and_gradient(x, g);
    auto& diag = model.diagnostics;
    if (options.record_loss_trace) diag.loss_trace.push_back(f);

    constexpr double kArmijo = 1e-4;
    double step = 1.0;
    Eigen::VectorXd x_new, g_new;
    std::size_t iter = 0;
    while (g.lpNorm<Eigen::Infinity>() > options.tol && iter < options.max_iter) {
        const double g_sq = g.squaredNorm();
        double f_new = 0.0;
        bool accepted = false;
        for (int halving = 0; halving < 80; ++halving) {
            x_new = x - step * g;
            f_new = objective.value(x_new);
            if (f_new <= f - kArmijo * step * g_sq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no further decrease representable
        f_new = objective.value_and_gradient(x_new, g_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        ++iter;
        if (options.record_loss_trace) diag.loss_trace.push_back(f);
    }
    diag.iterations = iter;
    diag.final_loss = f;
    diag.grad_norm = g.lpNorm<Eigen::Infinity>();
    diag.converged = diag.grad_norm <= options.tol;
    if (!diag.converged)
        log::warn(fmt::format("pref::train: stopped after {} iterations with |grad|_inf = {:.3e} (tol {:.1e})", iter,
                              diag.grad_norm, options.tol));

    const auto k = static_cast<Eigen::Index>(model.features.size());
    model.weights = x.head(k);
    model.bias = x(k);
    return model;
}

double accuracy(const PrefModel& model, std::span<const PairSet> pairs) {
    std::size_t n = 0;
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        if (p.empty()) continue;
        const Eigen::VectorXd z = model.scores(p);
        for (std::size_t q = 0; q < p.size(); ++q) {
            const int label = sigmoid(z(static_cast<Eigen::Index>(q))) >= 0.5 ? 1 : 0;
            if (label == static_cast<int>(p.labels()[q])) ++correct;
        }
        n += p.size();
    }
    if (n == 0) throw InvalidInput("accuracy: empty evaluation set");
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace affinv::pref
