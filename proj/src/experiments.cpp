#include "acv/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "acv/dataset.hpp"
#include "acv/rng.hpp"

namespace acv {

namespace {

// substream tags for derive(); values are arbitrary but fixed
enum : std::uint64_t {
    kBatchStream = 0,
    kStepNoise = 1,
    kProviderInit = 2,
    kEvalBatch = 3,
    kMeasureNoise = 4,
    kCoeffNoise = 5,
    kNelboEval = 6,
    kVarProbe = 7,
};

std::vector<int> minibatch_at(std::uint64_t seed, int n, int size) {
    rng::Stream stream(seed);
    return sample_minibatch(stream, n, size);
}

double sample_variance(double sum, double sum_sq, int n) {
    return std::max(0.0, (sum_sq - sum * sum / n) / (n - 1));
}

// Welford accumulation; the one-pass sum-of-squares form loses everything to
// cancellation when the sequence is (nearly) deterministic, which is exactly
// the perfect-control-variate case the experiments care about.
struct RunningVariance {
    long long n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
};

struct RunningVectorVariance {
    long long n = 0;
    Eigen::VectorXd mean, m2;
    explicit RunningVectorVariance(int dim)
        : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}
    void add(const Eigen::VectorXd& x) {
        ++n;
        const Eigen::VectorXd delta = x - mean;
        mean += delta / n;
        m2 += delta.cwiseProduct(x - mean);
    }
    double trace_variance() const { return n > 1 ? m2.sum() / (n - 1) : 0.0; }
};

// Runs work(0..count-1), possibly on `jobs` threads. Each index writes to
// its own result slot, so the merged output is identical either way.
void run_jobs(int jobs, int count, const std::function<void(int)>& work) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const int workers = std::min(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    work(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// One provider update at frozen model parameters: sample noise, evaluate
// the objective at the current coefficients, step the provider.
double coefficient_training_step(const DoublyStochasticModel& model,
                                 CoefficientProvider& provider, ObjectiveKind objective,
                                 const Eigen::VectorXd& theta, Optimizer& coeff_opt,
                                 std::span<const int> batch, std::uint64_t noise_seed,
                                 int basis_order) {
    const NoiseDraw noise = sample_noise(noise_seed, static_cast<int>(batch.size()), 1,
                                         model.noise_dim());
    const BasisEval basis = eval_basis(noise, basis_order);
    const Eigen::MatrixXd grads = batch_per_datum_grads(model, batch, noise, theta);
    const Eigen::MatrixXd contexts = batch_contexts(model, batch);
    const CoefficientBlock coeffs = provider.coefficients(contexts);
    const ObjectiveEvaluation eval = evaluate_objective(objective, grads, basis, coeffs);
    if (provider.param_count() > 0) {
        Eigen::VectorXd phi = provider.params();
        coeff_opt.step(phi, provider.param_grad(eval.d_coeff));
        provider.set_params(phi);
    }
    return eval.value;
}

}  // namespace

ProviderSpec ProviderSpec::parse(const std::string& text) {
    ProviderSpec spec;
    const auto colon = text.find(':');
    spec.kind = text.substr(0, colon);
    if (spec.kind != "none" && spec.kind != "context_free" && spec.kind != "amortized")
        throw std::invalid_argument("unknown provider kind: " + text);
    if (spec.kind == "amortized") {
        if (colon == std::string::npos) {
            spec.hidden_sizes = {128, 128, 128};
        } else {
            std::stringstream ss(text.substr(colon + 1));
            std::string part;
            while (std::getline(ss, part, '-')) {
                const int size = std::stoi(part);
                if (size < 1) throw std::invalid_argument("provider hidden size must be >= 1");
                spec.hidden_sizes.push_back(size);
            }
        }
    } else if (colon != std::string::npos) {
        throw std::invalid_argument("provider kind " + spec.kind + " takes no sizes");
    }
    return spec;
}

std::string ProviderSpec::label() const {
    if (kind != "amortized") return kind;
    std::ostringstream out;
    out << kind << ':';
    for (std::size_t i = 0; i < hidden_sizes.size(); ++i) {
        if (i) out << '-';
        out << hidden_sizes[i];
    }
    return out.str();
}

std::unique_ptr<CoefficientProvider> ProviderSpec::build(const DoublyStochasticModel& model,
                                                         int feature_dim,
                                                         std::uint64_t seed) const {
    if (kind == "none") return make_none_provider(model.param_dim(), feature_dim);
    if (kind == "context_free") return make_context_free_provider(model.param_dim(), feature_dim);
    return make_amortized_provider(model.context_dim(), model.param_dim(), feature_dim,
                                   hidden_sizes, seed);
}

VarianceMeasurement measure_gradient_variance(const DoublyStochasticModel& model,
                                              const Eigen::VectorXd& theta,
                                              const CoefficientBlock& coeffs,
                                              std::span<const int> batch, int draws,
                                              std::uint64_t seed, int basis_order) {
    if (draws < 2) throw std::invalid_argument("measure_gradient_variance: need at least 2 draws");
    const int bsz = static_cast<int>(batch.size());
    const int p = model.param_dim();
    const double scale = static_cast<double>(model.dataset_size()) / bsz;

    RunningVariance norm_hat, norm_tilde;
    RunningVectorVariance comp_hat(p), comp_tilde(p);
    for (int r = 0; r < draws; ++r) {
        const NoiseDraw noise =
            sample_noise(rng::derive(seed, static_cast<std::uint64_t>(r)), bsz, 1, model.noise_dim());
        const BasisEval basis = eval_basis(noise, basis_order);
        const Eigen::MatrixXd grads = batch_per_datum_grads(model, batch, noise, theta);
        const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, scale);

        norm_hat.add(cg.g_hat.norm());
        norm_tilde.add(cg.g_tilde.norm());
        comp_hat.add(cg.g_hat);
        comp_tilde.add(cg.g_tilde);
    }

    VarianceMeasurement m;
    m.draws = draws;
    m.var_norm_hat = norm_hat.variance();
    m.var_norm_tilde = norm_tilde.variance();
    m.trace_hat = comp_hat.trace_variance();
    m.trace_tilde = comp_tilde.trace_variance();
    return m;
}

namespace {

double safe_ratio(double num, double den) {
    if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

}  // namespace

VarianceReport variance_ratio(const DoublyStochasticModel& model, const Eigen::VectorXd& theta,
                              CoefficientProvider& provider, std::span<const int> batch,
                              int draws, std::uint64_t seed, int basis_order) {
    const Eigen::MatrixXd contexts = batch_contexts(model, batch);
    const CoefficientBlock coeffs = provider.coefficients(contexts);
    const VarianceMeasurement m =
        measure_gradient_variance(model, theta, coeffs, batch, draws, seed, basis_order);

    VarianceReport report;
    report.provider = provider.kind();
    report.draws = draws;
    report.seed = seed;
    report.ratio = safe_ratio(m.var_norm_tilde, m.var_norm_hat);
    report.trace_ratio = safe_ratio(m.trace_tilde, m.trace_hat);
    return report;
}

std::vector<VarianceReport> static_variance_experiment(const DoublyStochasticModel& model,
                                                       const StaticVarianceConfig& config) {
    if (config.providers.empty())
        throw std::invalid_argument("static_variance_experiment: no provider arms");
    const int feature_dim = config.basis_order * model.noise_dim();
    const int max_steps = *std::max_element(config.checkpoints.begin(), config.checkpoints.end());

    std::vector<std::vector<VarianceReport>> per_seed(config.seeds);
    run_jobs(config.jobs, config.seeds, [&](int r) {
        const std::uint64_t base = rng::derive(config.seed, static_cast<std::uint64_t>(r));

        // Uncontrolled model training, snapshotting theta at each checkpoint.
        std::vector<Eigen::VectorXd> snapshots;
        {
            Eigen::VectorXd theta = model.initial_theta();
            auto none = make_none_provider(model.param_dim(), feature_dim);
            auto model_opt = make_optimizer(config.model_opt);
            auto unused = make_optimizer(config.coeff_opt);
            for (int step = 1; step <= max_steps; ++step) {
                const std::vector<int> batch =
                    minibatch_at(rng::derive(base, kBatchStream, step), model.dataset_size(),
                                 config.batch_size);
                alternating_step(model, *none, config.objective, theta, *model_opt, *unused, batch,
                                 rng::derive(base, kStepNoise, step), config.basis_order);
                if (std::find(config.checkpoints.begin(), config.checkpoints.end(), step) !=
                    config.checkpoints.end())
                    snapshots.push_back(theta);
            }
        }

        static const char* kLabels[] = {"early", "mid", "late"};
        for (std::size_t ci = 0; ci < config.checkpoints.size(); ++ci) {
            const Eigen::VectorXd& theta = snapshots[ci];
            const std::string label = (config.checkpoints.size() <= 3)
                                          ? kLabels[ci]
                                          : "ck" + std::to_string(config.checkpoints[ci]);
            // One mini-batch is fixed per period: coefficient training
            // samples fresh gradient values (noise only) on that batch, and
            // the variance ratio is measured on the same batch.
            const std::vector<int> batch = minibatch_at(rng::derive(base, kEvalBatch, ci),
                                                        model.dataset_size(), config.batch_size);
            const std::uint64_t measure_seed = rng::derive(base, kMeasureNoise, ci);

            for (std::size_t ai = 0; ai < config.providers.size(); ++ai) {
                auto provider =
                    config.providers[ai].build(model, feature_dim, rng::derive(base, kProviderInit, ci));
                auto coeff_opt = make_optimizer(config.coeff_opt);

                for (int step = 0; step <= config.coeff_steps; ++step) {
                    if (std::find(config.log_grid.begin(), config.log_grid.end(), step) !=
                        config.log_grid.end()) {
                        VarianceReport report = variance_ratio(model, theta, *provider, batch,
                                                               config.draws, measure_seed,
                                                               config.basis_order);
                        report.checkpoint = label;
                        report.cv_step = step;
                        report.provider = config.providers[ai].label();
                        report.objective = to_string(config.objective);
                        report.seed = rng::derive(config.seed, static_cast<std::uint64_t>(r));
                        per_seed[r].push_back(std::move(report));
                    }
                    if (step == config.coeff_steps) break;
                    coefficient_training_step(model, *provider, config.objective, theta, *coeff_opt,
                                              batch, rng::derive(base, kCoeffNoise, ci, step),
                                              config.basis_order);
                }
            }
        }
    });

    std::vector<VarianceReport> rows;
    for (auto& block : per_seed)
        rows.insert(rows.end(), std::make_move_iterator(block.begin()),
                    std::make_move_iterator(block.end()));
    return rows;
}

std::vector<VarianceReport> dynamic_variance_experiment(const DoublyStochasticModel& model,
                                                        const DynamicVarianceConfig& config) {
    if (config.providers.empty())
        throw std::invalid_argument("dynamic_variance_experiment: no provider arms");
    const int feature_dim = config.basis_order * model.noise_dim();

    struct Job {
        int seed_index;
        std::size_t arm;
    };
    std::vector<Job> jobs;
    for (int r = 0; r < config.seeds; ++r)
        for (std::size_t ai = 0; ai < config.providers.size(); ++ai) jobs.push_back({r, ai});

    std::vector<std::vector<VarianceReport>> results(jobs.size());
    run_jobs(config.jobs, static_cast<int>(jobs.size()), [&](int j) {
        const auto [r, ai] = jobs[j];
        const std::uint64_t base = rng::derive(config.seed, static_cast<std::uint64_t>(r));

        Eigen::VectorXd theta = model.initial_theta();
        auto provider = config.providers[ai].build(model, feature_dim, rng::derive(base, kProviderInit));
        auto model_opt = make_optimizer(config.model_opt);
        auto coeff_opt = make_optimizer(config.coeff_opt);

        for (int iter = 1; iter <= config.iterations; ++iter) {
            const std::vector<int> batch = minibatch_at(rng::derive(base, kBatchStream, iter),
                                                        model.dataset_size(), config.batch_size);
            alternating_step(model, *provider, config.objective, theta, *model_opt, *coeff_opt,
                             batch, rng::derive(base, kStepNoise, iter), config.basis_order);
            if (std::find(config.checkpoints.begin(), config.checkpoints.end(), iter) !=
                config.checkpoints.end()) {
                const std::vector<int> eval_batch = minibatch_at(rng::derive(base, kEvalBatch, iter),
                                                                 model.dataset_size(),
                                                                 config.batch_size);
                VarianceReport report =
                    variance_ratio(model, theta, *provider, eval_batch, config.draws,
                                   rng::derive(base, kMeasureNoise, iter), config.basis_order);
                report.checkpoint = "iter" + std::to_string(iter);
                report.cv_step = iter;
                report.provider = config.providers[ai].label();
                report.objective = to_string(config.objective);
                report.seed = base;
                results[j].push_back(std::move(report));
            }
        }
    });

    std::vector<VarianceReport> rows;
    for (auto& block : results)
        rows.insert(rows.end(), std::make_move_iterator(block.begin()),
                    std::make_move_iterator(block.end()));
    return rows;
}

std::string TraceArm::label() const {
    if (provider.kind == "none") return "uncontrolled";
    return provider.label() + ":" + to_string(objective);
}

std::vector<TraceRow> nelbo_trace_experiment(const DoublyStochasticModel& model,
                                             const NelboTraceConfig& config) {
    if (config.arms.empty()) throw std::invalid_argument("nelbo_trace_experiment: no arms");
    const int feature_dim = config.basis_order * model.noise_dim();
    const std::uint64_t base = config.seed;

    std::vector<std::vector<TraceRow>> per_arm(config.arms.size());
    run_jobs(config.jobs, static_cast<int>(config.arms.size()), [&](int ai) {
        const TraceArm& arm = config.arms[ai];
        Eigen::VectorXd theta = model.initial_theta();
        auto provider = arm.provider.build(model, feature_dim, rng::derive(base, kProviderInit));
        auto model_opt = make_optimizer(config.model_opt);
        auto coeff_opt = make_optimizer(config.coeff_opt);

        for (int iter = 1; iter <= config.iterations; ++iter) {
            const std::vector<int> batch = minibatch_at(rng::derive(base, kBatchStream, iter),
                                                        model.dataset_size(), config.batch_size);
            alternating_step(model, *provider, arm.objective, theta, *model_opt, *coeff_opt, batch,
                             rng::derive(base, kStepNoise, iter), config.basis_order);

            TraceRow row;
            row.iter = iter;
            row.method = arm.label();
            row.nelbo =
                model.nelbo_estimate(theta, config.nelbo_samples, rng::derive(base, kNelboEval, iter));
            if (config.var_draws >= 2) {
                const Eigen::MatrixXd contexts = batch_contexts(model, batch);
                const CoefficientBlock coeffs = provider->coefficients(contexts);
                const VarianceMeasurement m = measure_gradient_variance(
                    model, theta, coeffs, batch, config.var_draws,
                    rng::derive(base, kVarProbe, iter), config.basis_order);
                row.grad_norm_var = m.var_norm_tilde;
            }
            per_arm[ai].push_back(std::move(row));
        }
    });

    std::vector<TraceRow> rows;
    for (auto& block : per_arm) rows.insert(rows.end(), block.begin(), block.end());

    // difference traces against the uncontrolled baseline, when present
    int baseline = -1;
    for (std::size_t ai = 0; ai < config.arms.size(); ++ai)
        if (config.arms[ai].provider.kind == "none") baseline = static_cast<int>(ai);
    if (baseline >= 0) {
        for (std::size_t ai = 0; ai < config.arms.size(); ++ai) {
            if (static_cast<int>(ai) == baseline) continue;
            for (std::size_t k = 0; k < per_arm[ai].size(); ++k) {
                TraceRow diff;
                diff.iter = per_arm[ai][k].iter;
                diff.method = "diff:" + per_arm[ai][k].method;
                diff.nelbo = per_arm[ai][k].nelbo - per_arm[baseline][k].nelbo;
                diff.grad_norm_var = per_arm[ai][k].grad_norm_var - per_arm[baseline][k].grad_norm_var;
                rows.push_back(std::move(diff));
            }
        }
    }
    return rows;
}

Fig1Result illustrate_fig1(const Fig1Config& config) {
    if (config.coeff_draws < 2 || config.var_draws < 2)
        throw std::invalid_argument("illustrate_fig1: need at least 2 draws");

    Fig1Result result;
    result.degenerate = (config.x[0] == config.x[1] && config.y[0] == config.y[1]);

    // 1-D logistic regression at the initial state m = 0, L = 1; the scalar
    // of interest is the mean-parameter gradient of a single-datum batch.
    const double n_data = 2.0;
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
    const auto grad_mean = [&](int k, double eps) {
        Eigen::VectorXd x(1), e(1);
        x[0] = config.x[k];
        e[0] = eps;
        return logreg_per_datum_grad(x, config.y[k], e, theta, n_data)[0];
    };

    for (int k = 0; k < 2; ++k) {
        for (int i = 0; i < config.grid_points; ++i) {
            const double eps = -config.grid_span +
                               2.0 * config.grid_span * i /
                                   std::max(1, config.grid_points - 1);
            result.curve.push_back({k, eps, grad_mean(k, eps)});
        }
    }

    // Per-batch optimal linear coefficients from paired draws, plus the
    // pooled coefficient minimizing the average variance across batches.
    {
        const long long r = config.coeff_draws;
        Eigen::MatrixXd eps(r, 1), g0(r, 1), g1(r, 1);
        rng::Stream stream(rng::derive(config.seed, 0));
        for (long long i = 0; i < r; ++i) {
            const double e = stream.normal();
            eps(i, 0) = e;
            g0(i, 0) = grad_mean(0, e);
            g1(i, 0) = grad_mean(1, e);
        }
        result.coeff_batch[0] = empirical_optimal_coefficient(g0, eps)(0, 0);
        result.coeff_batch[1] = empirical_optimal_coefficient(g1, eps)(0, 0);

        Eigen::MatrixXd pooled_g(2 * r, 1), pooled_eps(2 * r, 1);
        pooled_g << g0, g1;
        pooled_eps << eps, eps;
        result.coeff_shared = empirical_optimal_coefficient(pooled_g, pooled_eps)(0, 0);
    }

    // Estimator variances on fresh draws.
    {
        const long long r = config.var_draws;
        double sum[6] = {0}, sq[6] = {0};
        rng::Stream stream(rng::derive(config.seed, 1));
        for (long long i = 0; i < r; ++i) {
            const double e = stream.normal();
            for (int k = 0; k < 2; ++k) {
                const double g = grad_mean(k, e);
                const double vals[3] = {g, g - result.coeff_shared * e,
                                        g - result.coeff_batch[k] * e};
                for (int v = 0; v < 3; ++v) {
                    sum[k * 3 + v] += vals[v];
                    sq[k * 3 + v] += vals[v] * vals[v];
                }
            }
        }
        for (int k = 0; k < 2; ++k) {
            result.var_uncontrolled[k] = sample_variance(sum[k * 3], sq[k * 3], static_cast<int>(r));
            result.var_shared[k] = sample_variance(sum[k * 3 + 1], sq[k * 3 + 1], static_cast<int>(r));
            result.var_batch[k] = sample_variance(sum[k * 3 + 2], sq[k * 3 + 2], static_cast<int>(r));
        }
    }
    return result;
}

std::optional<Fig1Config> find_fig1_instance(std::uint64_t seed) {
    const double x1_grid[] = {1.5, 2.0, 2.5, 3.0};
    const double x2_grid[] = {-1.0, -0.6, -0.3, 0.3, 0.6};
    const double y_grid[] = {0.0, 1.0};

    const auto qualifies = [](const Fig1Result& r) {
        bool shared_hurts_one = false;
        for (int k = 0; k < 2; ++k) {
            if (!(r.var_batch[k] < 0.97 * r.var_uncontrolled[k])) return false;
            if (r.var_shared[k] > 1.03 * r.var_uncontrolled[k]) shared_hurts_one = true;
        }
        return shared_hurts_one;
    };

    for (const double x1 : x1_grid)
        for (const double y1 : y_grid)
            for (const double x2 : x2_grid)
                for (const double y2 : y_grid) {
                    Fig1Config candidate;
                    candidate.x[0] = x1;
                    candidate.x[1] = x2;
                    candidate.y[0] = y1;
                    candidate.y[1] = y2;
                    candidate.seed = seed;
                    candidate.coeff_draws = 200000;
                    candidate.var_draws = 200000;
                    if (!qualifies(illustrate_fig1(candidate))) continue;
                    candidate.coeff_draws = 1000000;
                    candidate.var_draws = 1000000;
                    if (qualifies(illustrate_fig1(candidate))) return candidate;
                }
    return std::nullopt;
}

std::vector<TimingRow> timing_overhead(const DoublyStochasticModel& model,
                                       const TimingConfig& config) {
    if (config.providers.empty()) throw std::invalid_argument("timing_overhead: no provider arms");
    const int feature_dim = config.basis_order * model.noise_dim();

    std::vector<TimingRow> rows;
    for (const ProviderSpec& arm : config.providers) {
        const std::uint64_t base = rng::derive(config.seed, rows.size());
        Eigen::VectorXd theta = model.initial_theta();
        auto provider = arm.build(model, feature_dim, rng::derive(base, kProviderInit));
        auto model_opt = make_optimizer(config.model_opt);
        auto coeff_opt = make_optimizer(config.coeff_opt);

        double sum = 0.0, sq = 0.0;
        int step_index = 0;
        for (int rep = 0; rep < config.repetitions; ++rep) {
            const auto start = std::chrono::steady_clock::now();
            for (int s = 0; s < config.steps_per_rep; ++s, ++step_index) {
                const std::vector<int> batch =
                    minibatch_at(rng::derive(base, kBatchStream, step_index), model.dataset_size(),
                                 config.batch_size);
                alternating_step(model, *provider, config.objective, theta, *model_opt, *coeff_opt,
                                 batch, rng::derive(base, kStepNoise, step_index),
                                 config.basis_order);
            }
            const auto stop = std::chrono::steady_clock::now();
            const double ms =
                std::chrono::duration<double, std::milli>(stop - start).count() / config.steps_per_rep;
            sum += ms;
            sq += ms * ms;
        }

        TimingRow row;
        row.provider = arm.label();
        row.objective = to_string(config.objective);
        row.repetitions = config.repetitions;
        row.steps_per_rep = config.steps_per_rep;
        row.mean_ms = sum / config.repetitions;
        row.std_ms = std::sqrt(sample_variance(sum, sq, config.repetitions));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace acv
