#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "affinv/corpus.hpp"
#include "affinv/error.hpp"
#include "affinv/eval.hpp"
#include "affinv/invariance.hpp"
#include "affinv/io.hpp"
#include "affinv/log.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/preflearn.hpp"
#include "affinv/synth.hpp"

namespace affinv::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum class Scope { All, Inliers, Outliers };

/// Everything a run depends on. Optional fields fall back to the corpus manifest
/// (pair settings) or to the subcommand default.
struct RunConfig {
    std::string command;
    std::string corpus;
    fs::path out = ".";
    std::optional<double> p_t;
    std::optional<bool> symmetric;
    double nu = 0.3;
    std::string kernel = "rbf";
    std::optional<double> gamma;
    std::size_t svm_max_iter = 0;
    double zero_tol = 1e-12;
    double p_value_gate = 0.0;
    std::optional<double> lambda;
    std::string lambdas = "0.0:1.0:0.1";
    double reg = 1e-4;
    double tol = 1e-6;
    std::size_t max_iter = 10000;
    bool no_standardize = false;
    bool redetect = false;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string scope = "all";
    std::string partition;
    std::size_t runs = 30;
    std::optional<std::size_t> k;
    synth::SynthSpec spec;
};

Scope parse_scope(const std::string& s) {
    if (s == "all") return Scope::All;
    if (s == "inliers") return Scope::Inliers;
    if (s == "outliers") return Scope::Outliers;
    throw InvalidInput(fmt::format("unknown scope '{}'", s));
}

fs::path manifest_path(const std::string& corpus) {
    if (corpus.empty()) throw InvalidInput("--corpus is required");
    fs::path p(corpus);
    if (fs::is_directory(p)) p /= "manifest.json";
    return p;
}

ocsvm::DetectConfig detect_config(const RunConfig& rc, const PairConfig& pairs) {
    ocsvm::DetectConfig d;
    d.pairs = pairs;
    d.signs = SignConfig{rc.zero_tol, rc.p_value_gate};
    d.nu = rc.nu;
    d.kernel = ocsvm::kernel_type_from_string(rc.kernel);
    d.gamma = rc.gamma;
    d.solver.max_iter = rc.svm_max_iter;
    return d;
}

eval::ModelConfig model_config(const RunConfig& rc, const PairConfig& pairs) {
    eval::ModelConfig m;
    m.pairs = pairs;
    m.signs = SignConfig{rc.zero_tol, rc.p_value_gate};
    m.train.reg = rc.reg;
    m.train.tol = rc.tol;
    m.train.max_iter = rc.max_iter;
    m.train.standardize = !rc.no_standardize;
    m.lambda = rc.lambda;
    m.redetect_per_fold = rc.redetect;
    m.detect = detect_config(rc, pairs);
    m.threads = rc.threads;
    return m;
}

void validate(const RunConfig& rc) {
    if (rc.p_t && !(*rc.p_t >= 0.0 && *rc.p_t <= 1.0)) throw InvalidInput("--p-t must lie in [0,1]");
    if (!(rc.nu > 0.0 && rc.nu <= 1.0)) throw InvalidInput("--nu must lie in (0,1]");
    (void)ocsvm::kernel_type_from_string(rc.kernel);
    if (rc.gamma && !(*rc.gamma > 0.0)) throw InvalidInput("--gamma must be positive");
    if (rc.lambda && !(*rc.lambda >= 0.0 && *rc.lambda <= 1.0)) throw InvalidInput("--lambda must lie in [0,1]");
    if (!(rc.reg >= 0.0)) throw InvalidInput("--reg must be >= 0");
    if (!(rc.tol > 0.0)) throw InvalidInput("--tol must be positive");
    if (rc.max_iter == 0) throw InvalidInput("--max-iter must be positive");
    if (rc.threads == 0) throw InvalidInput("--threads must be positive");
    if (!(rc.zero_tol >= 0.0)) throw InvalidInput("--zero-tol must be >= 0");
    if (!(rc.p_value_gate >= 0.0 && rc.p_value_gate <= 1.0)) throw InvalidInput("--p-value-gate must lie in [0,1]");
    (void)parse_scope(rc.scope);
    if (rc.runs == 0) throw InvalidInput("--runs must be positive");
    if (rc.command == "synth") rc.spec.validate();
    if (rc.command == "sweep") (void)eval::parse_lambda_grid(rc.lambdas);
}

std::string config_snapshot(const RunConfig& rc, const PairConfig* pairs) {
    ojson j;
    j["generated_at"] = io::utc_timestamp();
    j["kind"] = "run_config";
    j["command"] = rc.command;
    if (rc.command == "synth") {
        auto spec = ojson::parse(io::to_json(rc.spec, ""));
        spec.erase("generated_at");
        spec.erase("kind");
        j["synth"] = spec;
    } else {
        j["corpus"] = rc.corpus;
        if (pairs) j["pairs"] = {{"p_t", pairs->p_t}, {"symmetric_pairs", pairs->symmetric}};
        j["signs"] = {{"zero_tol", rc.zero_tol}, {"p_value_gate", rc.p_value_gate}};
        j["detect"] = {{"nu", rc.nu}, {"kernel", rc.kernel}, {"gamma", rc.gamma ? ojson(*rc.gamma) : ojson(nullptr)},
                       {"svm_max_iter", rc.svm_max_iter}};
        j["lambda"] = rc.lambda ? ojson(*rc.lambda) : ojson(nullptr);
        if (rc.command == "sweep") j["lambdas"] = eval::parse_lambda_grid(rc.lambdas);
        j["train"] = {{"reg", rc.reg}, {"tol", rc.tol}, {"max_iter", rc.max_iter}, {"standardize", !rc.no_standardize}};
        j["redetect_per_fold"] = rc.redetect;
        j["scope"] = rc.scope;
        j["partition"] = rc.partition.empty() ? ojson(nullptr) : ojson(rc.partition);
        j["seed"] = rc.seed;
        if (rc.command == "control") {
            j["runs"] = rc.runs;
            j["k"] = rc.k ? ojson(*rc.k) : ojson(nullptr);
        }
        j["threads"] = rc.threads;
    }
    return j.dump(2) + "\n";
}

struct Loaded {
    LoadedCorpus data;
    PairConfig pairs;
};

Loaded load(const RunConfig& rc) {
    auto data = load_manifest(manifest_path(rc.corpus));
    PairConfig pairs = data.config.pairs;
    if (rc.p_t) pairs.p_t = *rc.p_t;
    if (rc.symmetric) pairs.symmetric = *rc.symmetric;
    return Loaded{std::move(data), pairs};
}

/// Reads --partition if given, otherwise detects and writes partition.json.
ocsvm::Partition obtain_partition(const RunConfig& rc, const eval::PreparedCorpus& prepared,
                                  const PairConfig& pairs) {
    if (!rc.partition.empty()) {
        auto p = io::partition_from_json(io::read_text(rc.partition));
        const auto ids = prepared.corpus().env_ids();
        if (p.env_ids != ids) throw InvalidInput("partition environments do not match the corpus");
        return p;
    }
    const auto ids = prepared.corpus().env_ids();
    auto p = ocsvm::partition_environments(prepared.sign_matrix(ids), detect_config(rc, pairs));
    io::write_text(rc.out / "partition.json", io::to_json(p));
    return p;
}

std::vector<std::string> scoped(const RunConfig& rc, const eval::PreparedCorpus& prepared,
                                const PairConfig& pairs) {
    switch (parse_scope(rc.scope)) {
        case Scope::All: return prepared.corpus().env_ids();
        case Scope::Inliers: return obtain_partition(rc, prepared, pairs).inliers();
        case Scope::Outliers: return obtain_partition(rc, prepared, pairs).outliers();
    }
    return {};
}

// --- subcommands --------------------------------------------------------------

void cmd_synth(const RunConfig& rc) {
    const auto generated = synth::generate(rc.spec);
    write_corpus(rc.out, generated.corpus);
    io::write_text(rc.out / "ground_truth.json", io::to_json(generated.truth));
    io::write_text(rc.out / "spec.json", io::to_json(rc.spec));
    io::write_text(rc.out / "config.json", config_snapshot(rc, nullptr));
    std::cout << fmt::format("wrote {} environments ({} planted outliers) to {}\n", generated.corpus.size(),
                             generated.truth.outlier_env_ids.size(), rc.out.string());
}

void cmd_detect(const RunConfig& rc) {
    const auto loaded = load(rc);
    io::write_text(rc.out / "config.json", config_snapshot(rc, &loaded.pairs));
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto ids = loaded.data.corpus.env_ids();
    const auto signs = prepared.sign_matrix(ids);
    const auto p = ocsvm::partition_environments(signs, detect_config(rc, loaded.pairs));
    io::write_text(rc.out / "representations.csv", io::sign_matrix_csv(signs));
    io::write_text(rc.out / "partition.json", io::to_json(p));
    io::write_text(rc.out / "partition.csv", io::partition_csv(p));
    std::cout << fmt::format("{} of {} environments flagged as outliers\n", p.outliers().size(), p.size());
}

void cmd_select(const RunConfig& rc) {
    const auto loaded = load(rc);
    RunConfig eff = rc;
    if (!eff.lambda) eff.lambda = 0.7;
    if (rc.scope == "all" && rc.partition.empty()) eff.scope = "inliers";
    io::write_text(rc.out / "config.json", config_snapshot(eff, &loaded.pairs));
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto envs = scoped(eff, prepared, loaded.pairs);
    if (envs.empty()) throw InvalidInput(fmt::format("scope '{}' contains no environments", eff.scope));
    const auto mask = invariant_mask(prepared.sign_matrix(envs), *eff.lambda);
    io::write_text(rc.out / "mask.json", io::to_json(mask));
    std::cout << fmt::format("{} of {} features selected at lambda = {}\n", mask.selected.size(), mask.dim(),
                             *eff.lambda);
}

void cmd_train(const RunConfig& rc) {
    const auto loaded = load(rc);
    io::write_text(rc.out / "config.json", config_snapshot(rc, &loaded.pairs));
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto envs = scoped(rc, prepared, loaded.pairs);
    std::optional<std::vector<std::size_t>> mask;
    if (rc.lambda) mask = invariant_mask(prepared.sign_matrix(envs), *rc.lambda).selected;
    std::vector<PairSet> pairs;
    for (const auto& id : envs)
        if (!prepared.pairs(id).empty()) pairs.push_back(prepared.pairs(id));
    if (pairs.empty()) throw InvalidInput(fmt::format("scope '{}' contains no pairs", rc.scope));
    const auto cfg = model_config(rc, loaded.pairs);
    const auto model = pref::train(pairs, mask, cfg.train);
    io::write_text(rc.out / "model.json", io::to_json(model));
    std::cout << fmt::format("trained on {} environments, {} features, training accuracy {:.4f}\n", envs.size(),
                             model.features.size(), pref::accuracy(model, pairs));
}

std::string summary_csv(const std::vector<const eval::Report*>& reports) {
    std::string out = "subset,n_envs,computable,mean_accuracy,ci_lo,ci_hi,n_features\n";
    for (const auto* r : reports)
        out += fmt::format("{},{},{},{},{},{},{}\n", r->label, r->envs.size(), r->computable ? 1 : 0,
                           r->mean_accuracy, r->ci.lo, r->ci.hi, r->n_features);
    return out;
}

void cmd_eval(const RunConfig& rc) {
    const auto loaded = load(rc);
    io::write_text(rc.out / "config.json", config_snapshot(rc, &loaded.pairs));
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto partition = obtain_partition(rc, prepared, loaded.pairs);
    const auto reports = eval::experiment_splits(prepared, partition, model_config(rc, loaded.pairs));
    const std::vector<const eval::Report*> all{&reports.all, &reports.inliers, &reports.outliers};
    io::write_text(rc.out / "reports.json", io::to_json(reports));
    io::write_text(rc.out / "folds.csv", io::folds_csv(all));
    io::write_text(rc.out / "summary.csv", summary_csv(all));
    for (const auto* r : all)
        std::cout << fmt::format("{:<9} n={:<3} accuracy {:.4f} [{:.4f}, {:.4f}]{}\n", r->label, r->envs.size(),
                                 r->mean_accuracy, r->ci.lo, r->ci.hi, r->computable ? "" : " (not computable)");
}

void cmd_control(const RunConfig& rc) {
    const auto loaded = load(rc);
    io::write_text(rc.out / "config.json", config_snapshot(rc, &loaded.pairs));
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto partition = obtain_partition(rc, prepared, loaded.pairs);
    const auto cfg = model_config(rc, loaded.pairs);
    const auto outliers = partition.outliers();
    const auto inliers = partition.inliers();
    const std::size_t k = rc.k.value_or(outliers.size());
    if (k < 2) throw InvalidInput(fmt::format("control subsets need k >= 2 (got {}); pass --k", k));

    eval::Report outlier_report;
    if (outliers.size() >= 2) {
        outlier_report = eval::lopo_cv(prepared, outliers, cfg, "outliers");
    } else {
        outlier_report.label = "outliers";
        outlier_report.envs = outliers;
        outlier_report.computable = false;
        outlier_report.config = cfg;
    }
    const auto random_inliers = eval::random_subset_control(prepared, inliers, k, rc.runs, rc.seed, cfg,
                                                            "random_inliers");
    const auto random_all = eval::random_subset_control(prepared, partition.env_ids, k, rc.runs, rc.seed, cfg,
                                                        "random_participants");
    io::write_text(rc.out / "outliers.json", io::to_json(outlier_report));
    io::write_text(rc.out / "control_inliers.json", io::to_json(random_inliers));
    io::write_text(rc.out / "control_participants.json", io::to_json(random_all));
    io::write_text(rc.out / "control_runs.csv", io::control_csv({&random_inliers, &random_all}));

    std::string table = "set,n_envs,mean_accuracy,ci_lo,ci_hi\n";
    table += fmt::format("outliers,{},{},{},{}\n", outliers.size(), outlier_report.mean_accuracy,
                         outlier_report.ci.lo, outlier_report.ci.hi);
    for (const auto* c : {&random_inliers, &random_all})
        table += fmt::format("{},{},{},{},{}\n", c->label, c->k, c->aggregate.mean, c->aggregate.lo, c->aggregate.hi);
    io::write_text(rc.out / "control.csv", table);
    std::cout << table;
}

void cmd_sweep(const RunConfig& rc) {
    const auto loaded = load(rc);
    io::write_text(rc.out / "config.json", config_snapshot(rc, &loaded.pairs));
    const auto lambdas = eval::parse_lambda_grid(rc.lambdas);
    const eval::PreparedCorpus prepared(loaded.data.corpus, loaded.pairs, SignConfig{rc.zero_tol, rc.p_value_gate});
    const auto partition = obtain_partition(rc, prepared, loaded.pairs);
    auto cfg = model_config(rc, loaded.pairs);
    cfg.lambda.reset();
    const auto rows = eval::lambda_sweep(prepared, partition, lambdas, cfg);
    io::write_text(rc.out / "sweep.json", io::to_json(rows));
    io::write_text(rc.out / "sweep.csv", io::sweep_csv(rows));
    std::cout << io::sweep_csv(rows);
}

// --- option wiring ----------------------------------------------------------------

void add_corpus_options(CLI::App* app, RunConfig& rc) {
    app->add_option("--corpus", rc.corpus, "Corpus manifest (or directory containing manifest.json)")->required();
    app->add_option("--p-t", rc.p_t, "Minimum label difference for a preference pair (default: manifest, 0.15)");
    app->add_option("--symmetric-pairs", rc.symmetric, "Emit reversed pairs (default: manifest, true)");
    app->add_option("--zero-tol", rc.zero_tol, "Correlations with |r| <= tol get sign 0");
    app->add_option("--p-value-gate", rc.p_value_gate, "Zero signs with p-value above this (0 disables)");
    app->add_option("--nu", rc.nu, "One-Class SVM nu");
    app->add_option("--kernel", rc.kernel, "rbf or linear");
    app->add_option("--gamma", rc.gamma, "RBF gamma (default 1/d)");
    app->add_option("--svm-max-iter", rc.svm_max_iter, "One-Class SVM iteration cap (0: 10^4 per environment)");
    app->add_option("--seed", rc.seed, "Top-level seed");
    app->add_option("--threads", rc.threads, "Parallel folds");
}

void add_model_options(CLI::App* app, RunConfig& rc) {
    app->add_option("--reg", rc.reg, "L2 regularization strength");
    app->add_option("--tol", rc.tol, "Gradient tolerance");
    app->add_option("--max-iter", rc.max_iter, "Maximum optimizer iterations");
    app->add_flag("--no-standardize", rc.no_standardize, "Disable per-fold feature standardization");
    app->add_flag("--redetect-per-fold", rc.redetect, "Re-run outlier detection inside each training fold");
    app->add_option("--partition", rc.partition, "Existing partition.json (default: detect)");
}

}  // namespace

int run(int argc, char** argv) {
    log::init_from_env();
    RunConfig rc;
    CLI::App app{"Outlier-environment detection and invariant feature selection for preference learning"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus with planted outlier environments");
    synth_cmd->add_option("--out", rc.out, "Output directory")->required();
    synth_cmd->add_option("--seed", rc.spec.seed, "Seed");
    synth_cmd->add_option("--n-envs", rc.spec.n_envs, "Number of environments");
    synth_cmd->add_option("--n-outliers", rc.spec.n_outliers, "Number of planted outlier environments");
    synth_cmd->add_option("--sessions", rc.spec.sessions_per_env, "Sessions per environment");
    synth_cmd->add_option("--windows", rc.spec.windows_per_session, "Windows per session");
    synth_cmd->add_option("--d", rc.spec.d, "Feature dimension");
    synth_cmd->add_option("--n-invariant", rc.spec.n_invariant, "Number of invariant features");
    synth_cmd->add_option("--flip-fraction", rc.spec.flip_fraction, "Fraction of invariant signs flipped in outliers");
    synth_cmd->add_option("--noise-sd", rc.spec.noise_sd, "Label noise");
    synth_cmd->add_option("--spurious-sd", rc.spec.spurious_sd, "Scale of environment-specific coefficients");

    auto* detect_cmd = app.add_subcommand("detect", "Partition environments into inliers and outliers");
    detect_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(detect_cmd, rc);

    auto* select_cmd = app.add_subcommand("select", "Select invariant features");
    select_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(select_cmd, rc);
    select_cmd->add_option("--lambda", rc.lambda, "Agreement threshold (default 0.7)");
    select_cmd->add_option("--scope", rc.scope, "all|inliers|outliers (default inliers)");
    select_cmd->add_option("--partition", rc.partition, "Existing partition.json (default: detect)");

    auto* train_cmd = app.add_subcommand("train", "Train a preference model on a scope of environments");
    train_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(train_cmd, rc);
    add_model_options(train_cmd, rc);
    train_cmd->add_option("--lambda", rc.lambda, "Mask features at this threshold (default: no mask)");
    train_cmd->add_option("--scope", rc.scope, "all|inliers|outliers");

    auto* eval_cmd = app.add_subcommand("eval", "LOPO-CV on all, inlier and outlier environments");
    eval_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(eval_cmd, rc);
    add_model_options(eval_cmd, rc);
    eval_cmd->add_option("--lambda", rc.lambda, "Mask features at this threshold (default: no mask)");

    auto* control_cmd = app.add_subcommand("control", "Random-subset control experiments");
    control_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(control_cmd, rc);
    add_model_options(control_cmd, rc);
    control_cmd->add_option("--lambda", rc.lambda, "Mask features at this threshold (default: no mask)");
    control_cmd->add_option("--runs", rc.runs, "Draws per control");
    control_cmd->add_option("--k", rc.k, "Subset size (default: number of outliers)");

    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy and mask size over a lambda grid");
    sweep_cmd->add_option("--out", rc.out, "Output directory")->required();
    add_corpus_options(sweep_cmd, rc);
    add_model_options(sweep_cmd, rc);
    sweep_cmd->add_option("--lambdas", rc.lambdas, "start:stop:step or comma list");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    }

    try {
        rc.command = app.get_subcommands().front()->get_name();
        validate(rc);
        fs::create_directories(rc.out);
        if (rc.command == "synth") cmd_synth(rc);
        else if (rc.command == "detect") cmd_detect(rc);
        else if (rc.command == "select") cmd_select(rc);
        else if (rc.command == "train") cmd_train(rc);
        else if (rc.command == "eval") cmd_eval(rc);
        else if (rc.command == "control") cmd_control(rc);
        else if (rc.command == "sweep") cmd_sweep(rc);
        return 0;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("affinv");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    return run(static_cast<int>(storage.size()), argv.data());
}

}  // namespace affinv::cli
