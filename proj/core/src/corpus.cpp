#include "affinv/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "affinv/error.hpp"
#include "affinv/log.hpp"
#include "atomic_file.hpp"
#include "csv.hpp"

namespace affinv {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Session / Environment / Corpus

Session::Session(std::string id, Eigen::MatrixXd features, Eigen::VectorXd labels)
    : id_(std::move(id)), features_(std::move(features)), labels_(std::move(labels)) {
    if (features_.rows() != labels_.size())
        throw InvalidInput(fmt::format("session '{}': {} feature rows but {} labels", id_,
                                       features_.rows(), labels_.size()));
}

Session Session::from_windows(std::string id, std::span<const Window> windows) {
    const Eigen::Index d = windows.empty() ? 0 : windows.front().features.size();
    Eigen::MatrixXd features(static_cast<Eigen::Index>(windows.size()), d);
    Eigen::VectorXd labels(static_cast<Eigen::Index>(windows.size()));
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& w = windows[k];
        if (w.window_id != k)
            throw InvalidInput(fmt::format("session '{}': window_id {} at position {} (ids must be consecutive from 0)",
                                           id, w.window_id, k));
        if (w.features.size() != d)
            throw InvalidInput(fmt::format("session '{}': window {} has {} features, expected {}", id, k,
                                           w.features.size(), d));
        features.row(static_cast<Eigen::Index>(k)) = w.features.transpose();
        labels(static_cast<Eigen::Index>(k)) = w.label;
    }
    return Session(std::move(id), std::move(features), std::move(labels));
}

Window Session::window(std::size_t k) const {
    if (k >= size()) throw InvalidInput(fmt::format("session '{}': window {} out of range", id_, k));
    const auto row = static_cast<Eigen::Index>(k);
    return Window{k, features_.row(row).transpose(), labels_(row)};
}

std::size_t Environment::window_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.size();
    return n;
}

Corpus::Corpus(std::vector<Environment> environments) : environments_(std::move(environments)) {
    if (environments_.size() < 2)
        throw InvalidInput(fmt::format("corpus needs at least 2 environments, got {}", environments_.size()));
    std::set<std::string> seen;
    bool have_dim = false;
    for (const auto& env : environments_) {
        if (!seen.insert(env.id).second) throw InvalidInput(fmt::format("duplicate environment id '{}'", env.id));
        bool pairable = false;
        for (const auto& s : env.sessions) {
            if (s.size() == 0) continue;
            if (!have_dim) {
                dim_ = s.dim();
                have_dim = true;
            } else if (s.dim() != dim_) {
                throw InvalidInput(fmt::format("environment '{}' session '{}': dimension {} differs from corpus dimension {}",
                                               env.id, s.id(), s.dim(), dim_));
            }
            for (Eigen::Index k = 0; k < s.labels().size(); ++k) {
                const double y = s.labels()(k);
                if (!(y >= 0.0 && y <= 1.0))
                    throw InvalidInput(fmt::format("environment '{}' session '{}' window {}: label {} outside [0,1]",
                                                   env.id, s.id(), k, y));
            }
            if (s.size() >= 2) pairable = true;
        }
        if (!pairable)
            throw InvalidInput(fmt::format("environment '{}' has no session with at least two windows", env.id));
    }
    if (dim_ == 0) throw InvalidInput("corpus features are zero-dimensional");
}

std::optional<std::size_t> Corpus::index_of(const std::string& env_id) const {
    for (std::size_t i = 0; i < environments_.size(); ++i)
        if (environments_[i].id == env_id) return i;
    return std::nullopt;
}

const Environment& Corpus::find(const std::string& env_id) const {
    auto idx = index_of(env_id);
    if (!idx) throw InvalidInput(fmt::format("unknown environment '{}'", env_id));
    return environments_[*idx];
}

std::vector<std::string> Corpus::env_ids() const {
    std::vector<std::string> ids;
    ids.reserve(environments_.size());
    for (const auto& e : environments_) ids.push_back(e.id);
    return ids;
}

// ---------------------------------------------------------------------------
// Traces

NormalizedTrace normalize_trace(std::span<const double> trace) {
    if (trace.empty()) throw InvalidInput("normalize_trace: empty trace");
    const auto [lo_it, hi_it] = std::minmax_element(trace.begin(), trace.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw InvalidInput("normalize_trace: non-finite value");
    NormalizedTrace out;
    out.values.resize(trace.size());
    if (hi == lo) {
        std::fill(out.values.begin(), out.values.end(), 0.5);
        out.degenerate = true;
        return out;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < trace.size(); ++i)
        out.values[i] = std::clamp((trace[i] - lo) / range, 0.0, 1.0);
    return out;
}

std::size_t window_length(double frame_rate, double window_seconds) {
    const double w = frame_rate * window_seconds;
    const double rounded = std::round(w);
    if (!(w > 0.0) || !std::isfinite(w) || std::abs(w - rounded) > 1e-9 * std::max(1.0, w) || rounded < 1.0)
        throw InvalidInput(fmt::format("frame_rate * window_seconds = {} is not a positive integer", w));
    return static_cast<std::size_t>(rounded);
}

std::vector<double> window_trace(std::span<const double> trace, std::size_t window_frames) {
    if (window_frames == 0) throw InvalidInput("window_trace: window length must be positive");
    std::vector<double> out;
    const std::size_t n_windows = trace.size() / window_frames;
    if (n_windows == 0) {
        log::warn(fmt::format("window_trace: window of {} frames exceeds trace length {}; no windows produced",
                              window_frames, trace.size()));
        return out;
    }
    out.reserve(n_windows);
    for (std::size_t k = 0; k < n_windows; ++k) {
        double sum = 0.0;
        for (std::size_t f = k * window_frames; f < (k + 1) * window_frames; ++f) sum += trace[f];
        out.push_back(sum / static_cast<double>(window_frames));
    }
    return out;
}

std::vector<double> window_trace(std::span<const double> trace, double frame_rate, double window_seconds) {
    return window_trace(trace, window_length(frame_rate, window_seconds));
}

// ---------------------------------------------------------------------------
// PairSet

PairSet::PairSet(std::string env_id, std::size_t dim, double p_t)
    : env_id_(std::move(env_id)), p_t_(p_t), windows_(0, static_cast<Eigen::Index>(dim)) {}

PairSet PairSet::from_diffs(std::string env_id, const Eigen::MatrixXd& diffs, std::span<const double> labels,
                            double p_t) {
    if (static_cast<std::size_t>(diffs.rows()) != labels.size())
        throw InvalidInput(fmt::format("PairSet::from_diffs: {} rows but {} labels", diffs.rows(), labels.size()));
    PairSet ps(std::move(env_id), static_cast<std::size_t>(diffs.cols()), p_t);
    // Each diff row pairs with a trailing zero row.
    Eigen::MatrixXd rows(diffs.rows() + 1, diffs.cols());
    rows.topRows(diffs.rows()) = diffs;
    rows.row(diffs.rows()).setZero();
    ps.add_windows(rows);
    const int zero_row = static_cast<int>(diffs.rows());
    for (std::size_t k = 0; k < labels.size(); ++k) ps.add_pair(static_cast<int>(k), zero_row, labels[k]);
    return ps;
}

Eigen::VectorXd PairSet::diff(std::size_t k) const {
    return (windows_.row(first_.at(k)) - windows_.row(second_.at(k))).transpose();
}

Eigen::MatrixXd PairSet::diffs() const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(size()), windows_.cols());
    for (std::size_t k = 0; k < size(); ++k)
        out.row(static_cast<Eigen::Index>(k)) = windows_.row(first_[k]) - windows_.row(second_[k]);
    return out;
}

Eigen::VectorXd PairSet::diff_column(std::size_t j) const {
    const auto col = static_cast<Eigen::Index>(j);
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k)
        out(static_cast<Eigen::Index>(k)) = windows_(first_[k], col) - windows_(second_[k], col);
    return out;
}

int PairSet::add_windows(const Eigen::MatrixXd& rows) {
    if (rows.cols() != windows_.cols())
        throw InvalidInput(fmt::format("PairSet '{}': window dimension {} differs from {}", env_id_, rows.cols(),
                                       windows_.cols()));
    const auto offset = windows_.rows();
    windows_.conservativeResize(offset + rows.rows(), Eigen::NoChange);
    windows_.bottomRows(rows.rows()) = rows;
    return static_cast<int>(offset);
}

void PairSet::add_pair(int first, int second, double label) {
    if (label != 0.0 && label != 1.0) throw InvalidInput(fmt::format("PairSet '{}': label {} not in {{0,1}}", env_id_, label));
    if (first < 0 || second < 0 || first >= windows_.rows() || second >= windows_.rows())
        throw InvalidInput(fmt::format("PairSet '{}': window index out of range", env_id_));
    first_.push_back(first);
    second_.push_back(second);
    labels_.push_back(label);
}

void PairSet::append(const PairSet& other) {
    const int offset = add_windows(other.windows_);
    for (std::size_t k = 0; k < other.size(); ++k)
        add_pair(other.first_[k] + offset, other.second_[k] + offset, other.labels_[k]);
}

PairSet build_pairs(const Session& session, const PairConfig& config, const std::string& env_id) {
    if (!(config.p_t >= 0.0)) throw InvalidInput(fmt::format("build_pairs: p_t must be >= 0, got {}", config.p_t));
    if (session.size() < 2)
        throw InvalidInput(fmt::format("build_pairs: session '{}' has fewer than two windows", session.id()));
    PairSet ps(env_id, session.dim(), config.p_t);
    ps.add_windows(session.features());
    const auto& y = session.labels();
    const auto n = static_cast<int>(session.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double delta = y(i) - y(j);
            if (std::abs(delta) < config.p_t || delta == 0.0) continue;
            const double label = delta > 0.0 ? 1.0 : 0.0;
            ps.add_pair(i, j, label);
            if (config.symmetric) ps.add_pair(j, i, 1.0 - label);
        }
    }
    return ps;
}

PairSet build_pairs(const Environment& env, const PairConfig& config) {
    std::size_t dim = 0;
    for (const auto& s : env.sessions)
        if (s.size() > 0) dim = s.dim();
    PairSet all(env.id, dim, config.p_t);
    for (const auto& s : env.sessions) {
        if (s.size() < 2) continue;
        all.append(build_pairs(s, config, env.id));
    }
    return all;
}

std::size_t count_qualifying_pairs(std::span<const double> labels, double p_t) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            const double delta = std::abs(labels[i] - labels[j]);
            if (delta >= p_t && delta > 0.0) ++n;
        }
    return n;
}

// ---------------------------------------------------------------------------
// Manifest ingestion

namespace {

std::vector<double> read_trace(const fs::path& path, const std::string& where) {
    const auto table = csv::read(path);
    if (table.header.empty()) throw IngestError(where + ": trace table has no columns");
    std::vector<double> trace;
    trace.reserve(table.rows.size());
    const std::size_t col = table.header.size() - 1;  // last column holds arousal
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size())
            throw IngestError(fmt::format("{}: trace row {} (line {}) has {} fields, header has {}", where, r,
                                          table.line_numbers[r], row.size(), table.header.size()));
        try {
            trace.push_back(csv::parse_double(row[col]));
        } catch (const std::invalid_argument& e) {
            throw IngestError(fmt::format("{}: trace row {} (line {}): {}", where, r, table.line_numbers[r], e.what()));
        }
    }
    return trace;
}

Session read_session(const fs::path& base, const std::string& env_id, const json& js, const IngestConfig& config) {
    if (!js.contains("id") || !js.contains("table"))
        throw IngestError(fmt::format("environment '{}': session entry needs 'id' and 'table'", env_id));
    const std::string sid = js.at("id").get<std::string>();
    const std::string where = fmt::format("environment '{}' session '{}'", env_id, sid);
    fs::path table_path = js.at("table").get<std::string>();
    if (table_path.is_relative()) table_path = base / table_path;
    if (!fs::exists(table_path)) throw IngestError(fmt::format("{}: missing table file '{}'", where, table_path.string()));

    const auto table = csv::read(table_path);
    const auto& header = table.header;
    if (header.empty() || header.front() != "window_id")
        throw IngestError(fmt::format("{}: first column must be 'window_id'", where));

    const bool has_trace = js.contains("trace");
    const bool has_arousal = header.back() == "arousal";
    if (!has_arousal && !has_trace)
        throw IngestError(fmt::format("{}: last column must be 'arousal' (or provide a 'trace')", where));
    const std::size_t n_features = header.size() - 1 - (has_arousal ? 1 : 0);
    for (std::size_t j = 0; j < n_features; ++j)
        if (header[j + 1] != fmt::format("f{}", j))
            throw IngestError(fmt::format("{}: column {} is '{}', expected 'f{}'", where, j + 1, header[j + 1], j));

    const auto n_rows = static_cast<Eigen::Index>(table.rows.size());
    Eigen::MatrixXd features(n_rows, static_cast<Eigen::Index>(n_features));
    Eigen::VectorXd labels(n_rows);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        const auto line = table.line_numbers[static_cast<std::size_t>(r)];
        if (row.size() != header.size())
            throw IngestError(fmt::format("{}: ragged row {} (line {}): {} fields, header has {}", where, r, line,
                                          row.size(), header.size()));
        try {
            if (csv::parse_int(row[0]) != r)
                throw IngestError(fmt::format("{}: row {} (line {}) has window_id {}, expected {}", where, r, line,
                                              row[0], r));
            for (std::size_t j = 0; j < n_features; ++j)
                features(r, static_cast<Eigen::Index>(j)) = csv::parse_double(row[j + 1]);
            labels(r) = has_arousal ? csv::parse_double(row.back()) : 0.0;
        } catch (const std::invalid_argument& e) {
            throw IngestError(fmt::format("{}: row {} (line {}): {}", where, r, line, e.what()));
        }
    }

    if (has_trace) {
        if (!config.frame_rate || !config.window_seconds)
            throw IngestError(fmt::format("{}: trace ingestion needs frame_rate and window_seconds in config", where));
        fs::path trace_path = js.at("trace").get<std::string>();
        if (trace_path.is_relative()) trace_path = base / trace_path;
        if (!fs::exists(trace_path)) throw IngestError(fmt::format("{}: missing trace file '{}'", where, trace_path.string()));
        const auto raw = read_trace(trace_path, where);
        if (raw.empty()) throw IngestError(fmt::format("{}: empty trace", where));
        const auto norm = normalize_trace(raw);
        if (norm.degenerate) log::warn(where + ": constant arousal trace normalized to 0.5");
        const auto windows = window_trace(norm.values, *config.frame_rate, *config.window_seconds);
        if (static_cast<Eigen::Index>(windows.size()) != n_rows)
            throw IngestError(fmt::format("{}: trace yields {} windows but the table has {} rows", where, windows.size(),
                                          n_rows));
        for (Eigen::Index r = 0; r < n_rows; ++r) labels(r) = windows[static_cast<std::size_t>(r)];
    } else if (config.normalize_labels && n_rows > 0) {
        const auto norm = normalize_trace(std::span<const double>(labels.data(), static_cast<std::size_t>(n_rows)));
        if (norm.degenerate) log::warn(where + ": constant arousal column normalized to 0.5");
        for (Eigen::Index r = 0; r < n_rows; ++r) labels(r) = norm.values[static_cast<std::size_t>(r)];
    }

    for (Eigen::Index r = 0; r < n_rows; ++r)
        if (!(labels(r) >= 0.0 && labels(r) <= 1.0))
            throw IngestError(fmt::format("{}: row {}: arousal {} outside [0,1]", where, r, labels(r)));

    return Session(sid, std::move(features), std::move(labels));
}

}  // namespace

LoadedCorpus load_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IngestError(fmt::format("cannot open manifest '{}'", manifest_path.string()));
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IngestError(fmt::format("manifest '{}': {}", manifest_path.string(), e.what()));
    }
    const fs::path base = manifest_path.parent_path();

    IngestConfig config;
    try {
        if (manifest.contains("config")) {
            const auto& c = manifest.at("config");
            config.pairs.p_t = c.value("p_t", 0.15);
            config.pairs.symmetric = c.value("symmetric_pairs", true);
            config.normalize_labels = c.value("normalize_labels", false);
            if (c.contains("frame_rate")) config.frame_rate = c.at("frame_rate").get<double>();
            if (c.contains("window_seconds")) config.window_seconds = c.at("window_seconds").get<double>();
        }
        if (!manifest.contains("environments") || !manifest.at("environments").is_array())
            throw IngestError("invalid manifest: 'environments' array is required");
    } catch (const json::exception& e) {
        throw IngestError(fmt::format("invalid manifest config: {}", e.what()));
    }
    if (config.pairs.p_t < 0.0) throw IngestError("invalid manifest: p_t must be >= 0");

    const auto& envs_js = manifest.at("environments");
    if (envs_js.size() < 2)
        throw IngestError(fmt::format("invalid manifest: need at least 2 environments, found {}", envs_js.size()));

    std::vector<Environment> envs;
    std::optional<std::size_t> dim;
    for (const auto& ejs : envs_js) {
        if (!ejs.contains("id") || !ejs.contains("sessions") || !ejs.at("sessions").is_array())
            throw IngestError("invalid manifest: each environment needs 'id' and a 'sessions' array");
        Environment env;
        env.id = ejs.at("id").get<std::string>();
        for (const auto& sjs : ejs.at("sessions")) {
            auto session = read_session(base, env.id, sjs, config);
            if (session.size() > 0) {
                if (!dim) dim = session.dim();
                else if (session.dim() != *dim)
                    throw IngestError(fmt::format("environment '{}' session '{}': {} features per row, corpus has {}",
                                                  env.id, session.id(), session.dim(), *dim));
            }
            env.sessions.push_back(std::move(session));
        }
        envs.push_back(std::move(env));
    }
    try {
        return LoadedCorpus{Corpus(std::move(envs)), config};
    } catch (const IngestError&) {
        throw;
    } catch (const InvalidInput& e) {
        throw IngestError(e.what());
    }
}

Corpus load_corpus(const fs::path& manifest_path) { return load_manifest(manifest_path).corpus; }

void write_corpus(const fs::path& dir, const Corpus& corpus, const IngestConfig& config) {
    fs::create_directories(dir);
    json envs = json::array();
    for (const auto& env : corpus.environments()) {
        json sessions = json::array();
        const fs::path env_dir = fs::path("envs") / env.id;
        fs::create_directories(dir / env_dir);
        for (const auto& s : env.sessions) {
            const fs::path rel = env_dir / (s.id() + ".csv");
            std::string text = "window_id";
            for (std::size_t j = 0; j < s.dim(); ++j) text += fmt::format(",f{}", j);
            text += ",arousal\n";
            for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(s.size()); ++r) {
                text += std::to_string(r);
                for (Eigen::Index j = 0; j < s.features().cols(); ++j)
                    text += "," + csv::format_double(s.features()(r, j));
                text += "," + csv::format_double(s.labels()(r)) + "\n";
            }
            write_file_atomic(dir / rel, text);
            sessions.push_back(json{{"id", s.id()}, {"table", rel.generic_string()}});
        }
        envs.push_back(json{{"id", env.id}, {"sessions", sessions}});
    }
    json cfg{{"p_t", config.pairs.p_t},
             {"symmetric_pairs", config.pairs.symmetric},
             {"normalize_labels", config.normalize_labels}};
    if (config.frame_rate) cfg["frame_rate"] = *config.frame_rate;
    if (config.window_seconds) cfg["window_seconds"] = *config.window_seconds;
    nlohmann::ordered_json manifest;
    manifest["format"] = "affinv-corpus/1";
    manifest["d"] = corpus.dim();
    manifest["config"] = cfg;
    manifest["environments"] = envs;
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace affinv
