#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace affinv {

/// One fixed-length time window: a latent feature vector and its mean arousal.
struct Window {
    std::size_t window_id = 0;
    Eigen::VectorXd features;
    double label = 0.0;
};

/// A single play/annotate session. Windows are stored row-wise; row k is window k.
class Session {
public:
    Session() = default;
    Session(std::string id, Eigen::MatrixXd features, Eigen::VectorXd labels);

    static Session from_windows(std::string id, std::span<const Window> windows);

    const std::string& id() const noexcept { return id_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(labels_.size()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
    const Eigen::MatrixXd& features() const noexcept { return features_; }
    const Eigen::VectorXd& labels() const noexcept { return labels_; }
    Window window(std::size_t k) const;

private:
    std::string id_;
    Eigen::MatrixXd features_;
    Eigen::VectorXd labels_;
};

/// A data-generating environment; here one participant.
struct Environment {
    std::string id;
    std::vector<Session> sessions;

    std::size_t window_count() const noexcept;
};

/// Immutable, validated multi-environment corpus.
class Corpus {
public:
    Corpus() = default;

    /// Validates: >= 2 environments, unique ids, uniform dimension, labels in [0,1],
    /// every environment has a session with >= 2 windows.
    explicit Corpus(std::vector<Environment> environments);

    std::size_t size() const noexcept { return environments_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<Environment>& environments() const noexcept { return environments_; }
    const Environment& at(std::size_t i) const { return environments_.at(i); }

    std::optional<std::size_t> index_of(const std::string& env_id) const;
    const Environment& find(const std::string& env_id) const;
    std::vector<std::string> env_ids() const;

private:
    std::vector<Environment> environments_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Annotation-trace preprocessing

struct NormalizedTrace {
    std::vector<double> values;
    bool degenerate = false;  // max == min; every value was set to 0.5
};

/// Min-max normalization into [0,1].
NormalizedTrace normalize_trace(std::span<const double> trace);

/// Window length in frames; throws unless frame_rate * window_seconds is a positive integer.
std::size_t window_length(double frame_rate, double window_seconds);

/// Means over non-overlapping windows of `frame_rate * window_seconds` frames.
/// A trailing partial window is dropped.
std::vector<double> window_trace(std::span<const double> trace, double frame_rate,
                                 double window_seconds);
std::vector<double> window_trace(std::span<const double> trace, std::size_t window_frames);

// ---------------------------------------------------------------------------
// Pairwise preference data

struct PairConfig {
    double p_t = 0.15;
    bool symmetric = true;

    bool operator==(const PairConfig&) const = default;
};

/// Pairwise preference rows for one environment.
///
/// Stored factored: a window matrix plus (first, second) row indices, so that
/// diff k = windows[first_k] - windows[second_k]. `diffs()` materializes the
/// n_pairs x d difference matrix.
class PairSet {
public:
    PairSet() = default;
    PairSet(std::string env_id, std::size_t dim, double p_t);

    /// Wraps explicit difference rows (no window structure).
    static PairSet from_diffs(std::string env_id, const Eigen::MatrixXd& diffs,
                              std::span<const double> labels, double p_t = 0.0);

    const std::string& env_id() const noexcept { return env_id_; }
    double p_t() const noexcept { return p_t_; }
    std::size_t size() const noexcept { return first_.size(); }
    bool empty() const noexcept { return first_.empty(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(windows_.cols()); }

    const Eigen::MatrixXd& windows() const noexcept { return windows_; }
    const std::vector<int>& first() const noexcept { return first_; }
    const std::vector<int>& second() const noexcept { return second_; }
    const std::vector<double>& labels() const noexcept { return labels_; }

    Eigen::VectorXd diff(std::size_t k) const;
    Eigen::MatrixXd diffs() const;
    /// Column j of diffs().
    Eigen::VectorXd diff_column(std::size_t j) const;

    /// Appends all pairs of `other` (same dimension), re-basing its window rows.
    void append(const PairSet& other);

    /// Appends windows to the window matrix; returns the row offset of the first.
    int add_windows(const Eigen::MatrixXd& rows);
    void add_pair(int first, int second, double label);

private:
    std::string env_id_;
    double p_t_ = 0.0;
    Eigen::MatrixXd windows_;
    std::vector<int> first_;
    std::vector<int> second_;
    std::vector<double> labels_;
};

/// Pairs within one session: every i<j with label_i != label_j and |label_i - label_j| >= p_t, diff = w_i - w_j,
/// label 1 iff label_i > label_j. With `symmetric`, the reversed pair is emitted right after.
PairSet build_pairs(const Session& session, const PairConfig& config,
                    const std::string& env_id = {});

/// Concatenation of build_pairs over every session of the environment.
PairSet build_pairs(const Environment& env, const PairConfig& config);

/// Number of unordered pairs i<j with label_i != label_j and |label_i - label_j| >= p_t.
std::size_t count_qualifying_pairs(std::span<const double> labels, double p_t);

// ---------------------------------------------------------------------------
// Ingestion

struct IngestConfig {
    PairConfig pairs;
    bool normalize_labels = false;
    std::optional<double> frame_rate;
    std::optional<double> window_seconds;
};

struct LoadedCorpus {
    Corpus corpus;
    IngestConfig config;
};

/// Reads a corpus manifest (JSON) and every referenced table.
LoadedCorpus load_manifest(const std::filesystem::path& manifest_path);
Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Writes `<dir>/manifest.json` plus one CSV per session under `<dir>/envs/<env>/`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus,
                  const IngestConfig& config = {});

}  // namespace affinv
