#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acv/coefficients.hpp"
#include "acv/engine.hpp"
#include "acv/models.hpp"
#include "acv/objectives.hpp"

namespace acv {

// Parsed provider arm, e.g. "none", "context_free", "amortized:32-32".
struct ProviderSpec {
    std::string kind;
    std::vector<int> hidden_sizes;  // amortized only

    static ProviderSpec parse(const std::string& text);
    std::string label() const;
    std::unique_ptr<CoefficientProvider> build(const DoublyStochasticModel& model,
                                               int feature_dim, std::uint64_t seed) const;
};

struct VarianceMeasurement {
    double var_norm_hat = 0.0;    // Var[||G_hat||] over paired draws
    double var_norm_tilde = 0.0;  // Var[||G_tilde||]
    double trace_hat = 0.0;       // Tr(Cov[G_hat])
    double trace_tilde = 0.0;
    int draws = 0;
};

VarianceMeasurement measure_gradient_variance(const DoublyStochasticModel& model,
                                              const Eigen::VectorXd& theta,
                                              const CoefficientBlock& coeffs,
                                              std::span<const int> batch, int draws,
                                              std::uint64_t seed, int basis_order);

struct VarianceReport {
    std::string checkpoint;
    int cv_step = 0;
    std::string provider;
    std::string objective;
    double ratio = 1.0;        // Var[||G_tilde||] / Var[||G_hat||], paired draws
    double trace_ratio = 1.0;  // Tr(Cov[G_tilde]) / Tr(Cov[G_hat])
    int draws = 0;
    std::uint64_t seed = 0;
};

// Redraws noise `draws` times at fixed theta and fixed batch; the same
// draws feed the controlled and uncontrolled estimators, so zero
// coefficients give a ratio of exactly 1.
VarianceReport variance_ratio(const DoublyStochasticModel& model, const Eigen::VectorXd& theta,
                              CoefficientProvider& provider, std::span<const int> batch,
                              int draws, std::uint64_t seed, int basis_order);

// Freeze the model at several optimization checkpoints, then train only the
// coefficient provider and record the variance ratio along the way.
struct StaticVarianceConfig {
    std::vector<int> checkpoints = {10, 200, 1000};  // uncontrolled model steps
    int coeff_steps = 1000;
    std::vector<int> log_grid = {0, 1, 2, 5, 10, 20, 50, 100, 200, 350, 500, 700, 1000};
    int draws = 100;
    int batch_size = 10;
    int basis_order = 1;
    ObjectiveKind objective = ObjectiveKind::squared_difference;
    OptimizerConfig model_opt;
    OptimizerConfig coeff_opt;
    std::vector<ProviderSpec> providers;
    int seeds = 1;
    std::uint64_t seed = 1;
    int jobs = 1;
};

std::vector<VarianceReport> static_variance_experiment(const DoublyStochasticModel& model,
                                                       const StaticVarianceConfig& config);

// Joint model/coefficient optimization, pausing at checkpoints to measure
// the variance ratio in the current state.
struct DynamicVarianceConfig {
    int iterations = 2000;
    std::vector<int> checkpoints = {10, 200, 1000, 2000};
    int draws = 100;
    int batch_size = 10;
    int basis_order = 1;
    ObjectiveKind objective = ObjectiveKind::squared_difference;
    OptimizerConfig model_opt;
    OptimizerConfig coeff_opt;
    std::vector<ProviderSpec> providers;
    int seeds = 1;
    std::uint64_t seed = 1;
    int jobs = 1;
};

std::vector<VarianceReport> dynamic_variance_experiment(const DoublyStochasticModel& model,
                                                        const DynamicVarianceConfig& config);

// Joint training with a full-data objective estimate recorded every
// iteration. Arms sharing a seed see identical mini-batches and noise, so
// traces are directly comparable; "diff:<method>" rows hold the difference
// against the "none" baseline arm when one is configured.
struct TraceArm {
    ProviderSpec provider;
    ObjectiveKind objective = ObjectiveKind::squared_difference;
    std::string label() const;
};

struct NelboTraceConfig {
    int iterations = 2000;
    int batch_size = 10;
    int nelbo_samples = 100;
    int var_draws = 25;  // paired draws for the per-iteration gradient-norm variance; 0 disables
    int basis_order = 1;
    OptimizerConfig model_opt;
    OptimizerConfig coeff_opt;
    std::vector<TraceArm> arms;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct TraceRow {
    int iter = 0;
    std::string method;
    double nelbo = 0.0;
    double grad_norm_var = 0.0;
};

std::vector<TraceRow> nelbo_trace_experiment(const DoublyStochasticModel& model,
                                             const NelboTraceConfig& config);

// Two single-datum mini-batches of a 1-D logistic regression: the gradient
// as a function of the noise per batch, the per-batch and pooled optimal
// linear coefficients, and the resulting estimator variances.
struct Fig1Config {
    double x[2] = {2.5, -0.6};
    double y[2] = {1.0, 0.0};
    int grid_points = 41;
    double grid_span = 3.0;
    long long coeff_draws = 1000000;
    long long var_draws = 1000000;
    std::uint64_t seed = 1;
};

struct Fig1Result {
    bool degenerate = false;  // identical context points
    struct CurvePoint {
        int batch;
        double eps;
        double g;
    };
    std::vector<CurvePoint> curve;
    double coeff_batch[2] = {0, 0};
    double coeff_shared = 0;
    double var_uncontrolled[2] = {0, 0};
    double var_shared[2] = {0, 0};
    double var_batch[2] = {0, 0};
};

Fig1Result illustrate_fig1(const Fig1Config& config);

// Grid search for an instance where the shared coefficient increases one
// batch's variance while per-batch coefficients reduce both; candidates are
// verified by brute force at full draw count.
std::optional<Fig1Config> find_fig1_instance(std::uint64_t seed);

struct TimingConfig {
    int repetitions = 100;
    int steps_per_rep = 10;
    int batch_size = 10;
    int basis_order = 1;
    ObjectiveKind objective = ObjectiveKind::squared_difference;
    OptimizerConfig model_opt;
    OptimizerConfig coeff_opt;
    std::vector<ProviderSpec> providers;
    std::uint64_t seed = 1;
};

struct TimingRow {
    std::string provider;
    std::string objective;
    int repetitions = 0;
    int steps_per_rep = 0;
    double mean_ms = 0.0;  // per optimization step
    double std_ms = 0.0;
};

std::vector<TimingRow> timing_overhead(const DoublyStochasticModel& model,
                                       const TimingConfig& config);

}  // namespace acv
