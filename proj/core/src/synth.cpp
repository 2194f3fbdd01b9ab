#include "affinv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "affinv/error.hpp"
#include "affinv/rng.hpp"

namespace affinv::synth {

void SynthSpec::validate() const {
    if (n_envs < 2) throw InvalidInput(fmt::format("synth: n_envs must be >= 2, got {}", n_envs));
    if (n_outliers >= n_envs)
        throw InvalidInput(fmt::format("synth: n_outliers ({}) must be < n_envs ({})", n_outliers, n_envs));
    if (sessions_per_env < 1) throw InvalidInput("synth: sessions_per_env must be >= 1");
    if (windows_per_session < 2) throw InvalidInput("synth: windows_per_session must be >= 2");
    if (d < 1) throw InvalidInput("synth: d must be >= 1");
    if (n_invariant > d) throw InvalidInput(fmt::format("synth: n_invariant ({}) exceeds d ({})", n_invariant, d));
    if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0))
        throw InvalidInput(fmt::format("synth: flip_fraction {} outside [0,1]", flip_fraction));
    if (!(noise_sd >= 0.0)) throw InvalidInput("synth: noise_sd must be >= 0");
    if (!(spurious_sd >= 0.0)) throw InvalidInput("synth: spurious_sd must be >= 0");
}

bool GroundTruth::is_outlier(const std::string& env_id) const {
    return std::binary_search(outlier_env_ids.begin(), outlier_env_ids.end(), env_id);
}

namespace {

std::string env_name(std::size_t i, std::size_t n) {
    const auto width = std::to_string(n - 1).size();
    return fmt::format("p{:0{}}", i, std::max<std::size_t>(2, width));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

SynthCorpus generate(const SynthSpec& spec) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.d);

    GroundTruth truth;
    for (std::size_t e = 0; e < spec.n_envs; ++e) truth.env_ids.push_back(env_name(e, spec.n_envs));

    auto global = make_rng(spec.seed, "synth/global");
    std::vector<std::size_t> all_features(spec.d);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});
    std::sample(all_features.begin(), all_features.end(), std::back_inserter(truth.invariant_features),
                static_cast<std::ptrdiff_t>(spec.n_invariant), global);
    std::uniform_real_distribution<double> magnitude(0.5, 1.5);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t k = 0; k < spec.n_invariant; ++k)
        truth.shared_coefficients.push_back((coin(global) ? 1.0 : -1.0) * magnitude(global));

    std::vector<std::size_t> env_index(spec.n_envs);
    std::iota(env_index.begin(), env_index.end(), std::size_t{0});
    std::vector<std::size_t> outlier_index;
    std::sample(env_index.begin(), env_index.end(), std::back_inserter(outlier_index),
                static_cast<std::ptrdiff_t>(spec.n_outliers), global);
    const std::set<std::size_t> outlier_set(outlier_index.begin(), outlier_index.end());
    for (auto e : outlier_index) truth.outlier_env_ids.push_back(truth.env_ids[e]);
    std::sort(truth.outlier_env_ids.begin(), truth.outlier_env_ids.end());

    std::vector<bool> is_invariant(spec.d, false);
    for (auto f : truth.invariant_features) is_invariant[f] = true;
    const auto n_flip = static_cast<std::size_t>(std::llround(spec.flip_fraction * static_cast<double>(spec.n_invariant)));

    truth.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.n_envs), d);
    std::vector<Environment> envs;
    envs.reserve(spec.n_envs);
    for (std::size_t e = 0; e < spec.n_envs; ++e) {
        auto rng = make_rng(spec.seed, "synth/env", e);
        std::normal_distribution<double> normal(0.0, 1.0);

        Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < spec.n_invariant; ++k)
            beta(static_cast<Eigen::Index>(truth.invariant_features[k])) = truth.shared_coefficients[k];
        if (outlier_set.count(e)) {
            std::vector<std::size_t> flipped;
            std::sample(truth.invariant_features.begin(), truth.invariant_features.end(), std::back_inserter(flipped),
                        static_cast<std::ptrdiff_t>(n_flip), rng);
            for (auto f : flipped) beta(static_cast<Eigen::Index>(f)) = -beta(static_cast<Eigen::Index>(f));
        }
        for (std::size_t j = 0; j < spec.d; ++j)
            if (!is_invariant[j]) beta(static_cast<Eigen::Index>(j)) = spec.spurious_sd * normal(rng);
        truth.coefficients.row(static_cast<Eigen::Index>(e)) = beta.transpose();
        Environment env;
        env.id = truth.env_ids[e];
        for (std::size_t s = 0; s < spec.sessions_per_env; ++s) {
            const auto n = static_cast<Eigen::Index>(spec.windows_per_session);
            Eigen::VectorXd driver(n);
            for (Eigen::Index r = 0; r < n; ++r) driver(r) = normal(rng);
            Eigen::MatrixXd x = driver * beta.transpose();
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index j = 0; j < d; ++j) x(r, j) += normal(rng);
            std::vector<double> raw(static_cast<std::size_t>(n));
            for (Eigen::Index r = 0; r < n; ++r)
                raw[static_cast<std::size_t>(r)] = logistic(driver(r) + spec.noise_sd * normal(rng));
            const auto labels = normalize_trace(raw).values;
            env.sessions.emplace_back(fmt::format("s{}", s), std::move(x),
                                      Eigen::Map<const Eigen::VectorXd>(labels.data(), n));
        }
        envs.push_back(std::move(env));
    }
    return SynthCorpus{Corpus(std::move(envs)), std::move(truth)};
}

DetectionScore score_detection(const ocsvm::Partition& partition, const GroundTruth& truth) {
    std::set<std::string> universe_p(partition.env_ids.begin(), partition.env_ids.end());
    std::set<std::string> universe_t(truth.env_ids.begin(), truth.env_ids.end());
    if (universe_p != universe_t) throw InvalidInput("score_detection: partition and ground truth cover different environments");

    const auto predicted = partition.outliers();
    std::size_t tp = 0;
    for (const auto& id : predicted)
        if (truth.is_outlier(id)) ++tp;
    DetectionScore s;
    s.precision = predicted.empty() ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted.size());
    s.recall = truth.outlier_env_ids.empty() ? 1.0
                                             : static_cast<double>(tp) / static_cast<double>(truth.outlier_env_ids.size());
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

}  // namespace affinv::synth
