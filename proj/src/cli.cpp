#include "acv/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "acv/config.hpp"
#include "acv/dataset.hpp"
#include "acv/experiments.hpp"
#include "acv/theory.hpp"

namespace acv {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char* kUsage = R"(usage: acv <subcommand> [--config FILE] [--KEY=VALUE ...]

subcommands:
  illustrate        gradient-vs-noise curves and control variate variances
                    for two single-datum mini-batches
  static-variance   freeze the model at checkpoints, train coefficients only,
                    record variance ratios
  dynamic-variance  joint training with variance ratios at checkpoints
  train             joint training with a per-iteration objective trace
  theorem-check     empirical convergence trajectory against the rate bound
  time-overhead     per-step wall-clock cost per provider (table on stdout)

Dotted config keys from FILE can be overridden as --KEY=VALUE flags,
e.g. --optimizer.coeff.lr=0.001. Outputs: <output.path>.csv and
<output.path>.manifest.cfg.
)";

const std::set<std::string> kKnownKeys = {
    "seed", "seeds", "jobs", "output.path",
    "model.kind",
    "data.n", "data.dim", "data.clusters", "data.csv", "data.target",
    "quad.n", "quad.h_diag", "quad.b", "quad.coupling_scale", "quad.rho_min", "quad.rho_max",
    "cv.order",
    "objective.kind", "arms",
    "optimizer.model.kind", "optimizer.model.lr", "optimizer.model.beta1",
    "optimizer.model.beta2", "optimizer.model.eps",
    "optimizer.coeff.kind", "optimizer.coeff.lr", "optimizer.coeff.beta1",
    "optimizer.coeff.beta2", "optimizer.coeff.eps",
    "train.batch_size", "train.iterations",
    "trace.nelbo_samples", "trace.var_draws", "trace.objectives",
    "static.checkpoints", "static.coeff_steps", "static.log_grid", "static.draws",
    "dynamic.checkpoints", "dynamic.iterations", "dynamic.draws",
    "theorem.h_diag", "theorem.b", "theorem.coupling_scale", "theorem.cv_scale",
    "theorem.eta", "theorem.theta0", "theorem.steps", "theorem.seeds",
    "fig1.x", "fig1.y", "fig1.grid_points", "fig1.grid_span", "fig1.coeff_draws",
    "fig1.var_draws", "fig1.search",
    "timing.reps", "timing.steps",
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Collects paths as they are created so a failed run can clean up after
// itself.
class OutputSet {
public:
    std::ofstream open(const fs::path& path) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open output file: " + path.string());
        paths_.push_back(path);
        return out;
    }
    void remove_all() {
        for (const auto& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

private:
    std::vector<fs::path> paths_;
};

struct Invocation {
    std::string subcommand;
    Config config;
};

Invocation parse_args(const std::vector<std::string>& args) {
    if (args.empty()) throw UsageError("missing subcommand");
    Invocation inv;
    inv.subcommand = args[0];

    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument: " + arg);
        std::string key = arg.substr(2);
        std::string value;
        const auto eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= args.size()) throw UsageError("flag --" + key + " expects a value");
            value = args[++i];
        }
        if (key == "config") {
            if (!config_path.empty()) throw UsageError("conflicting flags: --config given twice");
            config_path = value;
            continue;
        }
        if (!kKnownKeys.count(key)) throw UsageError("unknown flag: --" + key);
        for (const auto& [seen, _] : overrides)
            if (seen == key) throw UsageError("conflicting flags: --" + key + " given twice");
        overrides.emplace_back(key, value);
    }

    if (!config_path.empty()) {
        try {
            inv.config = Config::parse_file(config_path);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        for (const auto& [key, _] : inv.config.entries())
            if (!kKnownKeys.count(key)) throw UsageError("unknown config key: " + key);
    }
    for (const auto& [key, value] : overrides) inv.config.set(key, value);
    return inv;
}

OptimizerConfig optimizer_config(const Config& config, const std::string& prefix,
                                 double default_lr) {
    OptimizerConfig opt;
    opt.kind = config.get_str(prefix + ".kind", "adam");
    opt.learning_rate = config.get_double(prefix + ".lr", default_lr);
    opt.beta1 = config.get_double(prefix + ".beta1", 0.9);
    opt.beta2 = config.get_double(prefix + ".beta2", 0.999);
    opt.epsilon = config.get_double(prefix + ".eps", 1e-8);
    return opt;
}

std::unique_ptr<DoublyStochasticModel> build_model(const Config& config) {
    const std::string kind = config.get_str("model.kind", "logistic");
    const std::uint64_t seed = config.get_u64("seed", 1);
    if (kind == "logistic") {
        Dataset data;
        const std::string csv = config.get_str("data.csv", "");
        if (!csv.empty()) {
            CsvSchema schema;
            schema.target_column = config.get_str("data.target", "");
            data = load_csv(csv, schema);
        } else {
            data = synth_logreg(rng::derive(seed, 0x64617461 /* "data" */),
                                config.get_int("data.n", 500), config.get_int("data.dim", 8),
                                config.get_int("data.clusters", 4))
                       .data;
        }
        return std::make_unique<LogisticRegressionModel>(data.features, data.targets);
    }
    if (kind == "quadratic_family") {
        const std::vector<double> h_diag = config.get_double_list("quad.h_diag", {1.0, 2.0});
        const int p = static_cast<int>(h_diag.size());
        QuadraticSpec spec;
        spec.h_mat = Eigen::VectorXd::Map(h_diag.data(), p).asDiagonal();
        const std::vector<double> b = config.get_double_list("quad.b", std::vector<double>(p, 1.0));
        if (static_cast<int>(b.size()) != p)
            throw std::runtime_error("quad.b length must match quad.h_diag");
        spec.b_vec = Eigen::VectorXd::Map(b.data(), p);
        spec.noise_coupling =
            config.get_double("quad.coupling_scale", 1.0) * Eigen::MatrixXd::Identity(p, p);

        const int n = config.get_int("quad.n", 50);
        const double rho_min = config.get_double("quad.rho_min", 0.5);
        const double rho_max = config.get_double("quad.rho_max", 1.5);
        Eigen::VectorXd rho = Eigen::VectorXd::LinSpaced(n, rho_min, rho_max);
        return std::make_unique<QuadraticFamilyModel>(spec, rho,
                                                      Eigen::VectorXd::Ones(p));
    }
    throw std::runtime_error("unknown model.kind: " + kind);
}

std::vector<ProviderSpec> parse_arms(const Config& config, const std::string& fallback) {
    std::vector<ProviderSpec> arms;
    for (const std::string& s : config.get_str_list("arms", {fallback}))
        arms.push_back(ProviderSpec::parse(s));
    return arms;
}

std::ofstream open_csv(OutputSet& outputs, const Config& config, const std::string& default_path) {
    const fs::path path = config.get_str("output.path", default_path) + std::string(".csv");
    std::ofstream out = outputs.open(path);
    out << "# config_hash=" << hex64(config.hash()) << " seed=" << config.get_u64("seed", 1)
        << " version=" << kArtifactVersion << "\n";
    return out;
}

void write_manifest(OutputSet& outputs, const Config& config, const std::string& subcommand,
                    const std::string& default_path) {
    const fs::path path =
        config.get_str("output.path", default_path) + std::string(".manifest.cfg");
    std::ofstream out = outputs.open(path);
    out << "artifact.version=" << kArtifactVersion << "\n";
    out << "subcommand=" << subcommand << "\n";
    out << "seed=" << config.get_u64("seed", 1) << "\n";
    out << "config_hash=" << hex64(config.hash()) << "\n";
    out << config.serialize();
}

// --- subcommands ---

int cmd_theorem_check(const Config& config, OutputSet& outputs) {
    const std::vector<double> h_diag = config.get_double_list("theorem.h_diag", {1.0, 2.0});
    const int p = static_cast<int>(h_diag.size());
    TheoremSpec spec;
    spec.quad.h_mat = Eigen::VectorXd::Map(h_diag.data(), p).asDiagonal();
    const std::vector<double> b = config.get_double_list("theorem.b", std::vector<double>(p, 0.0));
    if (static_cast<int>(b.size()) != p)
        throw std::runtime_error("theorem.b length must match theorem.h_diag");
    spec.quad.b_vec = Eigen::VectorXd::Map(b.data(), p);
    spec.quad.noise_coupling =
        config.get_double("theorem.coupling_scale", 1.0) * Eigen::MatrixXd::Identity(p, p);
    spec.cv_matrix =
        config.get_double("theorem.cv_scale", 1.0) * Eigen::MatrixXd::Identity(p, p);
    spec.eta = config.get_double("theorem.eta", 0.125);

    const std::vector<double> theta0_list =
        config.get_double_list("theorem.theta0", std::vector<double>(p, 1.0));
    if (static_cast<int>(theta0_list.size()) != p)
        throw std::runtime_error("theorem.theta0 length must match theorem.h_diag");
    const Eigen::VectorXd theta0 = Eigen::VectorXd::Map(theta0_list.data(), p);

    const int steps = config.get_int("theorem.steps", 200);
    const int seeds = config.get_int("theorem.seeds", spec.perfect_cv() ? 1 : 1000);

    const TrajectoryStats stats =
        run_controlled_sgd(spec, theta0, steps, seeds, config.get_u64("seed", 1));
    const bool perfect = spec.perfect_cv();
    const double rate = perfect ? spec.rate_c() : spec.rate_c_bar();
    if (rate >= 1.0)
        std::cerr << "note: rate constant " << (perfect ? "c" : "c_bar") << " = " << rate
                  << " >= 1, the bound is vacuous\n";

    std::ofstream csv = open_csv(outputs, config, "out/theorem");
    csv << "t,empirical,bound,seeds\n";
    for (int t = 0; t <= steps; ++t) {
        const double bound =
            perfect ? theorem1_bound(spec, theta0, t) : assumption4_bound(spec, theta0, t);
        csv << t << ',' << fmt(stats.mean_sq_dist[t]) << ',' << fmt(bound) << ',' << seeds << "\n";
    }
    return 0;
}

int cmd_static_variance(const Config& config, OutputSet& outputs) {
    const auto model = build_model(config);
    StaticVarianceConfig exp;
    exp.checkpoints = config.get_int_list("static.checkpoints", exp.checkpoints);
    exp.coeff_steps = config.get_int("static.coeff_steps", exp.coeff_steps);
    exp.log_grid = config.get_int_list("static.log_grid", exp.log_grid);
    exp.draws = config.get_int("static.draws", exp.draws);
    exp.batch_size = config.get_int("train.batch_size", exp.batch_size);
    exp.basis_order = config.get_int("cv.order", exp.basis_order);
    exp.objective =
        objective_from_string(config.get_str("objective.kind", "squared_difference"));
    exp.model_opt = optimizer_config(config, "optimizer.model", 0.01);
    exp.coeff_opt = optimizer_config(config, "optimizer.coeff", 0.01);
    exp.providers = parse_arms(config, "amortized:32-32");
    exp.seeds = config.get_int("seeds", 1);
    exp.seed = config.get_u64("seed", 1);
    exp.jobs = config.get_int("jobs", 1);

    const auto rows = static_variance_experiment(*model, exp);
    std::ofstream csv = open_csv(outputs, config, "out/static-variance");
    csv << "checkpoint,cv_step,provider,objective,ratio,draws,seed,trace_ratio\n";
    for (const auto& r : rows)
        csv << r.checkpoint << ',' << r.cv_step << ',' << r.provider << ',' << r.objective << ','
            << fmt(r.ratio) << ',' << r.draws << ',' << r.seed << ',' << fmt(r.trace_ratio) << "\n";
    return 0;
}

int cmd_dynamic_variance(const Config& config, OutputSet& outputs) {
    const auto model = build_model(config);
    DynamicVarianceConfig exp;
    exp.iterations = config.get_int("dynamic.iterations", exp.iterations);
    exp.checkpoints = config.get_int_list("dynamic.checkpoints", exp.checkpoints);
    exp.draws = config.get_int("dynamic.draws", exp.draws);
    exp.batch_size = config.get_int("train.batch_size", exp.batch_size);
    exp.basis_order = config.get_int("cv.order", exp.basis_order);
    exp.objective =
        objective_from_string(config.get_str("objective.kind", "squared_difference"));
    exp.model_opt = optimizer_config(config, "optimizer.model", 0.01);
    exp.coeff_opt = optimizer_config(config, "optimizer.coeff", 0.01);
    exp.providers = parse_arms(config, "amortized:128-128-128");
    exp.seeds = config.get_int("seeds", 1);
    exp.seed = config.get_u64("seed", 1);
    exp.jobs = config.get_int("jobs", 1);

    const auto rows = dynamic_variance_experiment(*model, exp);
    std::ofstream csv = open_csv(outputs, config, "out/dynamic-variance");
    csv << "checkpoint,cv_step,provider,objective,ratio,draws,seed,trace_ratio\n";
    for (const auto& r : rows)
        csv << r.checkpoint << ',' << r.cv_step << ',' << r.provider << ',' << r.objective << ','
            << fmt(r.ratio) << ',' << r.draws << ',' << r.seed << ',' << fmt(r.trace_ratio) << "\n";
    return 0;
}

int cmd_train(const Config& config, OutputSet& outputs) {
    const auto model = build_model(config);
    NelboTraceConfig exp;
    exp.iterations = config.get_int("train.iterations", exp.iterations);
    exp.batch_size = config.get_int("train.batch_size", exp.batch_size);
    exp.nelbo_samples = config.get_int("trace.nelbo_samples", exp.nelbo_samples);
    exp.var_draws = config.get_int("trace.var_draws", exp.var_draws);
    exp.basis_order = config.get_int("cv.order", exp.basis_order);
    exp.model_opt = optimizer_config(config, "optimizer.model", 0.01);
    exp.coeff_opt = optimizer_config(config, "optimizer.coeff", 0.01);
    exp.seed = config.get_u64("seed", 1);
    exp.jobs = config.get_int("jobs", 1);

    std::vector<ObjectiveKind> objectives;
    for (const std::string& name : config.get_str_list(
             "trace.objectives", {config.get_str("objective.kind", "squared_difference")}))
        objectives.push_back(objective_from_string(name));
    for (const ProviderSpec& provider : parse_arms(config, "amortized:128-128-128")) {
        if (provider.kind == "none") {
            exp.arms.push_back({provider, objectives.front()});
        } else {
            for (ObjectiveKind objective : objectives) exp.arms.push_back({provider, objective});
        }
    }

    const auto rows = nelbo_trace_experiment(*model, exp);
    std::ofstream csv = open_csv(outputs, config, "out/train");
    csv << "iter,method,nelbo,grad_norm_var\n";
    for (const auto& r : rows)
        csv << r.iter << ',' << r.method << ',' << fmt(r.nelbo) << ',' << fmt(r.grad_norm_var)
            << "\n";
    return 0;
}

int cmd_illustrate(const Config& config, OutputSet& outputs) {
    Fig1Config fig;
    fig.seed = config.get_u64("seed", 1);
    if (config.get_bool("fig1.search", false)) {
        const auto found = find_fig1_instance(fig.seed);
        if (!found)
            throw std::runtime_error("fig1 grid search found no qualifying context pair");
        fig = *found;
    } else {
        const std::vector<double> x = config.get_double_list("fig1.x", {fig.x[0], fig.x[1]});
        const std::vector<double> y = config.get_double_list("fig1.y", {fig.y[0], fig.y[1]});
        if (x.size() != 2 || y.size() != 2)
            throw std::runtime_error("fig1.x and fig1.y each need exactly two entries");
        fig.x[0] = x[0];
        fig.x[1] = x[1];
        fig.y[0] = y[0];
        fig.y[1] = y[1];
        fig.grid_points = config.get_int("fig1.grid_points", fig.grid_points);
        fig.grid_span = config.get_double("fig1.grid_span", fig.grid_span);
        fig.coeff_draws = config.get_int("fig1.coeff_draws", static_cast<int>(fig.coeff_draws));
        fig.var_draws = config.get_int("fig1.var_draws", static_cast<int>(fig.var_draws));
    }

    const Fig1Result result = illustrate_fig1(fig);
    if (result.degenerate)
        std::cerr << "warning: identical context points, batch-dependent and shared control "
                     "variates coincide\n";

    std::ofstream csv = open_csv(outputs, config, "out/illustrate");
    csv << "row,batch,epsilon,g_value,cv,variance,coefficient\n";
    for (const auto& point : result.curve)
        csv << "curve," << point.batch << ',' << fmt(point.eps) << ',' << fmt(point.g) << ",,,\n";
    for (int k = 0; k < 2; ++k) {
        csv << "variance," << k << ",,," << "none," << fmt(result.var_uncontrolled[k]) << ",0\n";
        csv << "variance," << k << ",,," << "shared," << fmt(result.var_shared[k]) << ','
            << fmt(result.coeff_shared) << "\n";
        csv << "variance," << k << ",,," << "batch," << fmt(result.var_batch[k]) << ','
            << fmt(result.coeff_batch[k]) << "\n";
    }
    return 0;
}

int cmd_time_overhead(const Config& config, OutputSet&) {
    const auto model = build_model(config);
    TimingConfig exp;
    exp.repetitions = config.get_int("timing.reps", exp.repetitions);
    exp.steps_per_rep = config.get_int("timing.steps", exp.steps_per_rep);
    exp.batch_size = config.get_int("train.batch_size", exp.batch_size);
    exp.basis_order = config.get_int("cv.order", exp.basis_order);
    exp.objective =
        objective_from_string(config.get_str("objective.kind", "squared_difference"));
    exp.model_opt = optimizer_config(config, "optimizer.model", 0.01);
    exp.coeff_opt = optimizer_config(config, "optimizer.coeff", 0.01);
    exp.providers = parse_arms(config, "amortized:128-128-128");
    exp.seed = config.get_u64("seed", 1);

    // Wall-clock numbers are hardware-dependent, so the table goes to stdout
    // rather than into the reproducible CSV set.
    const auto rows = timing_overhead(*model, exp);
    std::cout << "provider,objective,repetitions,steps_per_rep,mean_ms,std_ms\n";
    for (const auto& r : rows)
        std::cout << r.provider << ',' << r.objective << ',' << r.repetitions << ','
                  << r.steps_per_rep << ',' << fmt(r.mean_ms) << ',' << fmt(r.std_ms) << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    Invocation inv;
    try {
        inv = parse_args(args);
        const std::set<std::string> subcommands = {"illustrate",       "static-variance",
                                                   "dynamic-variance", "train",
                                                   "theorem-check",    "time-overhead"};
        if (!subcommands.count(inv.subcommand))
            throw UsageError("unknown subcommand: " + inv.subcommand);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return 2;
    }

    OutputSet outputs;
    try {
        const std::string default_path = "out/" + inv.subcommand;
        int code = 0;
        if (inv.subcommand == "theorem-check")
            code = cmd_theorem_check(inv.config, outputs);
        else if (inv.subcommand == "static-variance")
            code = cmd_static_variance(inv.config, outputs);
        else if (inv.subcommand == "dynamic-variance")
            code = cmd_dynamic_variance(inv.config, outputs);
        else if (inv.subcommand == "train")
            code = cmd_train(inv.config, outputs);
        else if (inv.subcommand == "illustrate")
            code = cmd_illustrate(inv.config, outputs);
        else if (inv.subcommand == "time-overhead")
            code = cmd_time_overhead(inv.config, outputs);
        if (code == 0) write_manifest(outputs, inv.config, inv.subcommand, default_path);
        return code;
    } catch (const std::exception& e) {
        outputs.remove_all();
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace acv
