#include "affinv/io.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "affinv/error.hpp"
#include "atomic_file.hpp"
#include "csv.hpp"

namespace affinv::io {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

ojson vec(const Eigen::VectorXd& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd to_vec(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

ojson mat(const Eigen::MatrixXd& m) {
    ojson rows = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd to_mat(const json& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = n > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != d)
            throw InvalidInput("ragged matrix in document");
        m.row(r) = to_vec(rows[static_cast<std::size_t>(r)]).transpose();
    }
    return m;
}

ojson document(std::string_view kind, const std::optional<std::string>& timestamp) {
    ojson doc;
    doc["generated_at"] = timestamp ? *timestamp : utc_timestamp();
    doc["kind"] = kind;
    return doc;
}

std::string finish(const ojson& doc) { return doc.dump(2) + "\n"; }

json parse_document(std::string_view text, std::string_view kind) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput(fmt::format("malformed {} document: {}", kind, e.what()));
    }
    if (!doc.is_object() || doc.value("kind", "") != kind)
        throw InvalidInput(fmt::format("document is not a '{}' document", kind));
    return doc;
}

template <typename Fn>
auto guarded(std::string_view kind, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw InvalidInput(fmt::format("invalid {} document: {}", kind, e.what()));
    }
}

// --- configuration blocks ---------------------------------------------------

ojson pair_config_json(const PairConfig& c) { return {{"p_t", c.p_t}, {"symmetric_pairs", c.symmetric}}; }
PairConfig pair_config_from(const json& j) {
    return PairConfig{j.at("p_t").get<double>(), j.at("symmetric_pairs").get<bool>()};
}

ojson sign_config_json(const SignConfig& c) { return {{"zero_tol", c.zero_tol}, {"p_value_gate", c.p_value_gate}}; }
SignConfig sign_config_from(const json& j) {
    return SignConfig{j.at("zero_tol").get<double>(), j.at("p_value_gate").get<double>()};
}

ojson detect_config_json(const ocsvm::DetectConfig& c) {
    ojson j;
    j["pairs"] = pair_config_json(c.pairs);
    j["signs"] = sign_config_json(c.signs);
    j["nu"] = c.nu;
    j["kernel"] = ocsvm::to_string(c.kernel);
    j["gamma"] = c.gamma ? ojson(*c.gamma) : ojson(nullptr);
    j["solver_eps"] = c.solver.eps;
    j["solver_max_iter"] = c.solver.max_iter;
    return j;
}
ocsvm::DetectConfig detect_config_from(const json& j) {
    ocsvm::DetectConfig c;
    c.pairs = pair_config_from(j.at("pairs"));
    c.signs = sign_config_from(j.at("signs"));
    c.nu = j.at("nu").get<double>();
    c.kernel = ocsvm::kernel_type_from_string(j.at("kernel").get<std::string>());
    if (!j.at("gamma").is_null()) c.gamma = j.at("gamma").get<double>();
    c.solver.eps = j.at("solver_eps").get<double>();
    c.solver.max_iter = j.at("solver_max_iter").get<std::size_t>();
    return c;
}

ojson train_options_json(const pref::TrainOptions& o) {
    return {{"reg", o.reg},
            {"tol", o.tol},
            {"max_iter", o.max_iter},
            {"standardize", o.standardize},
            {"record_loss_trace", o.record_loss_trace}};
}
pref::TrainOptions train_options_from(const json& j) {
    pref::TrainOptions o;
    o.reg = j.at("reg").get<double>();
    o.tol = j.at("tol").get<double>();
    o.max_iter = j.at("max_iter").get<std::size_t>();
    o.standardize = j.at("standardize").get<bool>();
    o.record_loss_trace = j.at("record_loss_trace").get<bool>();
    return o;
}

ojson model_config_json(const eval::ModelConfig& c) {
    ojson j;
    j["pairs"] = pair_config_json(c.pairs);
    j["signs"] = sign_config_json(c.signs);
    j["train"] = train_options_json(c.train);
    j["lambda"] = c.lambda ? ojson(*c.lambda) : ojson(nullptr);
    j["redetect_per_fold"] = c.redetect_per_fold;
    j["detect"] = detect_config_json(c.detect);
    j["threads"] = c.threads;
    return j;
}
eval::ModelConfig model_config_from(const json& j) {
    eval::ModelConfig c;
    c.pairs = pair_config_from(j.at("pairs"));
    c.signs = sign_config_from(j.at("signs"));
    c.train = train_options_from(j.at("train"));
    if (!j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
    c.redetect_per_fold = j.at("redetect_per_fold").get<bool>();
    c.detect = detect_config_from(j.at("detect"));
    c.threads = j.at("threads").get<unsigned>();
    return c;
}

// --- reports ----------------------------------------------------------------

ojson interval_json(const eval::Interval& i) { return {{"mean", i.mean}, {"lo", i.lo}, {"hi", i.hi}}; }
eval::Interval interval_from(const json& j) {
    return {j.at("mean").get<double>(), j.at("lo").get<double>(), j.at("hi").get<double>()};
}

ojson report_json(const eval::Report& r) {
    ojson j;
    j["label"] = r.label;
    j["computable"] = r.computable;
    j["mean_accuracy"] = r.mean_accuracy;
    j["ci95"] = interval_json(r.ci);
    j["n_features"] = r.n_features;
    j["zero_features"] = r.zero_features;
    j["envs"] = r.envs;
    j["skipped"] = r.skipped;
    ojson folds = ojson::array();
    for (const auto& f : r.folds)
        folds.push_back({{"held_out_env", f.held_out_env},
                         {"accuracy", f.accuracy},
                         {"n_test_pairs", f.n_test_pairs},
                         {"n_train_envs", f.n_train_envs},
                         {"n_features", f.n_features},
                         {"zero_features", f.zero_features}});
    j["folds"] = folds;
    j["config"] = model_config_json(r.config);
    return j;
}
eval::Report report_from(const json& j) {
    eval::Report r;
    r.label = j.at("label").get<std::string>();
    r.computable = j.at("computable").get<bool>();
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.ci = interval_from(j.at("ci95"));
    r.n_features = j.at("n_features").get<long long>();
    r.zero_features = j.at("zero_features").get<bool>();
    r.envs = j.at("envs").get<std::vector<std::string>>();
    r.skipped = j.at("skipped").get<std::vector<std::string>>();
    for (const auto& f : j.at("folds"))
        r.folds.push_back(eval::FoldResult{f.at("held_out_env").get<std::string>(), f.at("accuracy").get<double>(),
                                           f.at("n_test_pairs").get<std::size_t>(),
                                           f.at("n_train_envs").get<std::size_t>(),
                                           f.at("n_features").get<std::size_t>(), f.at("zero_features").get<bool>()});
    r.config = model_config_from(j.at("config"));
    return r;
}

ojson control_json(const eval::ControlReport& c) {
    ojson j;
    j["label"] = c.label;
    j["k"] = c.k;
    j["n_runs"] = c.n_runs;
    j["seed"] = c.seed;
    j["aggregate"] = interval_json(c.aggregate);
    j["run_means"] = c.run_means;
    j["pool"] = c.pool;
    j["draws"] = c.draws;
    ojson runs = ojson::array();
    for (const auto& r : c.runs) runs.push_back(report_json(r));
    j["runs"] = runs;
    return j;
}
eval::ControlReport control_from(const json& j) {
    eval::ControlReport c;
    c.label = j.at("label").get<std::string>();
    c.k = j.at("k").get<std::size_t>();
    c.n_runs = j.at("n_runs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.aggregate = interval_from(j.at("aggregate"));
    c.run_means = j.at("run_means").get<std::vector<double>>();
    c.pool = j.at("pool").get<std::vector<std::string>>();
    c.draws = j.at("draws").get<std::vector<std::vector<std::string>>>();
    for (const auto& r : j.at("runs")) c.runs.push_back(report_from(r));
    return c;
}

}  // namespace

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --- Partition ----------------------------------------------------------------

std::string to_json(const ocsvm::Partition& p, std::optional<std::string> timestamp) {
    auto doc = document("partition", timestamp);
    doc["short_circuited"] = p.short_circuited;
    doc["diagnostics"] = {{"iterations", p.diagnostics.iterations}, {"kkt_residual", p.diagnostics.kkt_residual}};
    doc["n_outliers"] = p.outliers().size();
    ojson envs = ojson::array();
    for (std::size_t i = 0; i < p.size(); ++i)
        envs.push_back({{"env_id", p.env_ids[i]},
                        {"score", p.scores[i]},
                        {"status", p.outlier[i] ? "outlier" : "inlier"}});
    doc["environments"] = envs;
    return finish(doc);
}

ocsvm::Partition partition_from_json(std::string_view text) {
    const auto doc = parse_document(text, "partition");
    return guarded("partition", [&] {
        ocsvm::Partition p;
        p.short_circuited = doc.at("short_circuited").get<bool>();
        p.diagnostics.iterations = doc.at("diagnostics").at("iterations").get<std::size_t>();
        p.diagnostics.kkt_residual = doc.at("diagnostics").at("kkt_residual").get<double>();
        for (const auto& e : doc.at("environments")) {
            p.env_ids.push_back(e.at("env_id").get<std::string>());
            p.scores.push_back(e.at("score").get<double>());
            const auto status = e.at("status").get<std::string>();
            if (status != "inlier" && status != "outlier") throw InvalidInput("partition status must be inlier/outlier");
            p.outlier.push_back(status == "outlier");
        }
        return p;
    });
}

// --- InvariantMask --------------------------------------------------------------

std::string to_json(const InvariantMask& m, std::optional<std::string> timestamp) {
    auto doc = document("invariant_mask", timestamp);
    doc["lambda"] = m.lambda;
    doc["n_envs"] = m.n_envs;
    doc["dim"] = m.dim();
    doc["n_selected"] = m.selected.size();
    ojson sel = ojson::array();
    for (auto i : m.selected) sel.push_back({{"feature", i}, {"c_pos", m.c_pos[i]}, {"c_neg", m.c_neg[i]}});
    doc["selected"] = sel;
    doc["c_pos"] = m.c_pos;
    doc["c_neg"] = m.c_neg;
    return finish(doc);
}

InvariantMask mask_from_json(std::string_view text) {
    const auto doc = parse_document(text, "invariant_mask");
    return guarded("invariant_mask", [&] {
        InvariantMask m;
        m.lambda = doc.at("lambda").get<double>();
        m.n_envs = doc.at("n_envs").get<std::size_t>();
        m.c_pos = doc.at("c_pos").get<std::vector<int>>();
        m.c_neg = doc.at("c_neg").get<std::vector<int>>();
        for (const auto& s : doc.at("selected")) m.selected.push_back(s.at("feature").get<std::size_t>());
        return m;
    });
}

// --- PrefModel ------------------------------------------------------------------

std::string to_json(const pref::PrefModel& m, std::optional<std::string> timestamp) {
    auto doc = document("preference_model", timestamp);
    doc["dim"] = m.dim;
    doc["masked"] = m.masked;
    doc["features"] = m.features;
    doc["weights"] = vec(m.weights);
    doc["bias"] = m.bias;
    doc["center"] = vec(m.center);
    doc["scale"] = vec(m.scale);
    doc["reg"] = m.reg;
    doc["diagnostics"] = {{"iterations", m.diagnostics.iterations},
                          {"final_loss", m.diagnostics.final_loss},
                          {"grad_norm", m.diagnostics.grad_norm},
                          {"converged", m.diagnostics.converged}};
    return finish(doc);
}

pref::PrefModel model_from_json(std::string_view text) {
    const auto doc = parse_document(text, "preference_model");
    return guarded("preference_model", [&] {
        pref::PrefModel m;
        m.dim = doc.at("dim").get<std::size_t>();
        m.masked = doc.at("masked").get<bool>();
        m.features = doc.at("features").get<std::vector<std::size_t>>();
        m.weights = to_vec(doc.at("weights"));
        m.bias = doc.at("bias").get<double>();
        m.center = to_vec(doc.at("center"));
        m.scale = to_vec(doc.at("scale"));
        m.reg = doc.at("reg").get<double>();
        const auto& d = doc.at("diagnostics");
        m.diagnostics.iterations = d.at("iterations").get<std::size_t>();
        m.diagnostics.final_loss = d.at("final_loss").get<double>();
        m.diagnostics.grad_norm = d.at("grad_norm").get<double>();
        m.diagnostics.converged = d.at("converged").get<bool>();
        const auto k = m.features.size();
        if (static_cast<std::size_t>(m.weights.size()) != k || static_cast<std::size_t>(m.center.size()) != k ||
            static_cast<std::size_t>(m.scale.size()) != k)
            throw InvalidInput("preference_model: weights/center/scale must match the feature list");
        for (auto f : m.features)
            if (f >= m.dim) throw InvalidInput("preference_model: feature index out of range");
        return m;
    });
}

// --- Reports --------------------------------------------------------------------

std::string to_json(const eval::Report& report, std::optional<std::string> timestamp) {
    auto doc = document("lopo_report", timestamp);
    doc["report"] = report_json(report);
    return finish(doc);
}

eval::Report report_from_json(std::string_view text) {
    const auto doc = parse_document(text, "lopo_report");
    return guarded("lopo_report", [&] { return report_from(doc.at("report")); });
}

std::string to_json(const eval::SplitReports& reports, std::optional<std::string> timestamp) {
    auto doc = document("split_reports", timestamp);
    doc["all"] = report_json(reports.all);
    doc["inliers"] = report_json(reports.inliers);
    doc["outliers"] = report_json(reports.outliers);
    return finish(doc);
}

eval::SplitReports split_reports_from_json(std::string_view text) {
    const auto doc = parse_document(text, "split_reports");
    return guarded("split_reports", [&] {
        return eval::SplitReports{report_from(doc.at("all")), report_from(doc.at("inliers")),
                                  report_from(doc.at("outliers"))};
    });
}

std::string to_json(const eval::ControlReport& report, std::optional<std::string> timestamp) {
    auto doc = document("control_report", timestamp);
    doc["control"] = control_json(report);
    return finish(doc);
}

eval::ControlReport control_from_json(std::string_view text) {
    const auto doc = parse_document(text, "control_report");
    return guarded("control_report", [&] { return control_from(doc.at("control")); });
}

std::string to_json(const std::vector<eval::SweepRow>& rows, std::optional<std::string> timestamp) {
    auto doc = document("lambda_sweep", timestamp);
    ojson arr = ojson::array();
    for (const auto& r : rows)
        arr.push_back({{"lambda", r.lambda},
                       {"subset", r.subset},
                       {"mean_accuracy", r.mean_accuracy},
                       {"ci95", interval_json(r.ci)},
                       {"n_features", r.n_features},
                       {"zero_features", r.zero_features},
                       {"computable", r.computable}});
    doc["rows"] = arr;
    return finish(doc);
}

std::vector<eval::SweepRow> sweep_from_json(std::string_view text) {
    const auto doc = parse_document(text, "lambda_sweep");
    return guarded("lambda_sweep", [&] {
        std::vector<eval::SweepRow> rows;
        for (const auto& r : doc.at("rows"))
            rows.push_back(eval::SweepRow{r.at("lambda").get<double>(), r.at("subset").get<std::string>(),
                                          r.at("mean_accuracy").get<double>(), interval_from(r.at("ci95")),
                                          r.at("n_features").get<long long>(), r.at("zero_features").get<bool>(),
                                          r.at("computable").get<bool>()});
        return rows;
    });
}

// --- Synthetic ground truth -------------------------------------------------------

std::string to_json(const synth::GroundTruth& t, std::optional<std::string> timestamp) {
    auto doc = document("ground_truth", timestamp);
    doc["env_ids"] = t.env_ids;
    doc["outlier_env_ids"] = t.outlier_env_ids;
    doc["invariant_features"] = t.invariant_features;
    doc["shared_coefficients"] = t.shared_coefficients;
    doc["coefficients"] = mat(t.coefficients);
    return finish(doc);
}

synth::GroundTruth truth_from_json(std::string_view text) {
    const auto doc = parse_document(text, "ground_truth");
    return guarded("ground_truth", [&] {
        synth::GroundTruth t;
        t.env_ids = doc.at("env_ids").get<std::vector<std::string>>();
        t.outlier_env_ids = doc.at("outlier_env_ids").get<std::vector<std::string>>();
        t.invariant_features = doc.at("invariant_features").get<std::vector<std::size_t>>();
        t.shared_coefficients = doc.at("shared_coefficients").get<std::vector<double>>();
        t.coefficients = to_mat(doc.at("coefficients"));
        return t;
    });
}

std::string to_json(const synth::SynthSpec& s, std::optional<std::string> timestamp) {
    auto doc = document("synth_spec", timestamp);
    doc["n_envs"] = s.n_envs;
    doc["n_outliers"] = s.n_outliers;
    doc["sessions_per_env"] = s.sessions_per_env;
    doc["windows_per_session"] = s.windows_per_session;
    doc["d"] = s.d;
    doc["n_invariant"] = s.n_invariant;
    doc["flip_fraction"] = s.flip_fraction;
    doc["noise_sd"] = s.noise_sd;
    doc["spurious_sd"] = s.spurious_sd;
    doc["seed"] = s.seed;
    return finish(doc);
}

synth::SynthSpec synth_spec_from_json(std::string_view text) {
    const auto doc = parse_document(text, "synth_spec");
    return guarded("synth_spec", [&] {
        synth::SynthSpec s;
        s.n_envs = doc.at("n_envs").get<std::size_t>();
        s.n_outliers = doc.at("n_outliers").get<std::size_t>();
        s.sessions_per_env = doc.at("sessions_per_env").get<std::size_t>();
        s.windows_per_session = doc.at("windows_per_session").get<std::size_t>();
        s.d = doc.at("d").get<std::size_t>();
        s.n_invariant = doc.at("n_invariant").get<std::size_t>();
        s.flip_fraction = doc.at("flip_fraction").get<double>();
        s.noise_sd = doc.at("noise_sd").get<double>();
        s.spurious_sd = doc.at("spurious_sd").get<double>();
        s.seed = doc.at("seed").get<std::uint64_t>();
        return s;
    });
}

// --- CSV tables -------------------------------------------------------------------

std::string sign_matrix_csv(const SignMatrix& m) {
    std::string out = "env_id";
    for (std::size_t j = 0; j < m.dim(); ++j) out += fmt::format(",{}", j);
    out += "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out += m.env_ids[r];
        for (std::size_t j = 0; j < m.dim(); ++j)
            out += fmt::format(",{}", static_cast<int>(m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j))));
        out += "\n";
    }
    return out;
}

std::string partition_csv(const ocsvm::Partition& p) {
    std::string out = "env_id,score,status\n";
    for (std::size_t i = 0; i < p.size(); ++i)
        out += fmt::format("{},{},{}\n", p.env_ids[i], csv::format_double(p.scores[i]), p.outlier[i] ? "outlier" : "inlier");
    return out;
}

std::string folds_csv(const std::vector<const eval::Report*>& reports) {
    std::string out = "subset,held_out_env,accuracy,n_test_pairs,n_train_envs,n_features,zero_features\n";
    for (const auto* r : reports)
        for (const auto& f : r->folds)
            out += fmt::format("{},{},{},{},{},{},{}\n", r->label, f.held_out_env, csv::format_double(f.accuracy),
                               f.n_test_pairs, f.n_train_envs, f.n_features, f.zero_features ? 1 : 0);
    return out;
}

std::string sweep_csv(const std::vector<eval::SweepRow>& rows) {
    std::string out = "lambda,subset,mean_accuracy,ci_lo,ci_hi,n_features,zero_features,computable\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{},{},{}\n", csv::format_double(r.lambda), r.subset,
                           csv::format_double(r.mean_accuracy), csv::format_double(r.ci.lo),
                           csv::format_double(r.ci.hi), r.n_features, r.zero_features ? 1 : 0, r.computable ? 1 : 0);
    return out;
}

std::string control_csv(const std::vector<const eval::ControlReport*>& reports) {
    std::string out = "label,run,mean_accuracy,ci_lo,ci_hi,n_envs\n";
    for (const auto* c : reports)
        for (std::size_t i = 0; i < c->runs.size(); ++i)
            out += fmt::format("{},{},{},{},{},{}\n", c->label, i, csv::format_double(c->runs[i].mean_accuracy),
                               csv::format_double(c->runs[i].ci.lo), csv::format_double(c->runs[i].ci.hi),
                               c->runs[i].envs.size());
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput(fmt::format("cannot read '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) { write_file_atomic(path, text); }

}  // namespace affinv::io
