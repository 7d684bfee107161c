#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "acv/experiments.hpp"
#include "test_support.hpp"

using namespace acv;
using test_support::random_matrix;

namespace {

QuadraticSpec canonical_spec() {
    QuadraticSpec spec;
    spec.h_mat = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    spec.b_vec = Eigen::Vector2d(1.0, 1.0);
    spec.noise_coupling = (Eigen::Matrix2d() << 1.0, 0.3, -0.2, 0.9).finished();
    return spec;
}

QuadraticFamilyModel family_model(int n = 12) {
    return QuadraticFamilyModel(canonical_spec(), Eigen::VectorXd::LinSpaced(n, 0.5, 1.5),
                                Eigen::Vector2d(1.5, -0.5));
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

TEST_CASE("experiment defaults follow the reference protocol") {
    const StaticVarianceConfig static_cfg;
    CHECK(static_cfg.checkpoints == std::vector<int>{10, 200, 1000});
    CHECK(static_cfg.coeff_steps == 1000);
    CHECK(static_cfg.draws == 100);
    CHECK(static_cfg.batch_size == 10);

    const NelboTraceConfig trace_cfg;
    CHECK(trace_cfg.iterations == 2000);
    CHECK(trace_cfg.batch_size == 10);
    CHECK(trace_cfg.nelbo_samples == 100);

    const TimingConfig timing_cfg;
    CHECK(timing_cfg.repetitions == 100);
    CHECK(timing_cfg.steps_per_rep == 10);
}

TEST_CASE("provider specs parse and label round-trip") {
    CHECK(ProviderSpec::parse("none").label() == "none");
    CHECK(ProviderSpec::parse("context_free").label() == "context_free");
    const ProviderSpec amortized = ProviderSpec::parse("amortized:32-16");
    CHECK(amortized.hidden_sizes == std::vector<int>{32, 16});
    CHECK(amortized.label() == "amortized:32-16");
    CHECK(ProviderSpec::parse("amortized").hidden_sizes == std::vector<int>{128, 128, 128});
    CHECK_THROWS_AS(ProviderSpec::parse("magic"), std::invalid_argument);
    CHECK_THROWS_AS(ProviderSpec::parse("none:4"), std::invalid_argument);
}

TEST_CASE("variance ratio is exactly one for zero coefficients") {
    const QuadraticFamilyModel model = family_model();
    auto provider = make_none_provider(2, 2);
    const std::vector<int> batch = {0, 3, 7};
    const VarianceReport report =
        variance_ratio(model, model.initial_theta(), *provider, batch, 100, 5, 1);
    CHECK(report.ratio == 1.0);
    CHECK(report.trace_ratio == 1.0);
}

TEST_CASE("variance ratio vanishes at the exact per-datum coefficients") {
    // single-datum batch with the matched coupling: the controlled gradient
    // is constant across draws
    const QuadraticFamilyModel model = family_model();
    const int b = 4;
    auto provider = make_context_free_provider(2, 2);
    const Eigen::MatrixXd exact = -model.rho(b) * model.base().noise_coupling;
    provider->set_params(Eigen::Map<const Eigen::VectorXd>(exact.data(), exact.size()));
    const std::vector<int> batch = {b};
    const VarianceReport report =
        variance_ratio(model, model.initial_theta(), *provider, batch, 50, 6, 1);
    CHECK(report.ratio < 1e-20);
}

TEST_CASE("variance measurement rejects fewer than two draws") {
    const QuadraticFamilyModel model = family_model();
    auto provider = make_none_provider(2, 2);
    const std::vector<int> batch = {0};
    CHECK_THROWS_AS(variance_ratio(model, model.initial_theta(), *provider, batch, 1, 5, 1),
                    std::invalid_argument);
}

TEST_CASE("optimal scalar coefficient reproduces the (1 - rho^2) identity") {
    // g = 2 eps + eps^2 against w = eps: Var[g] = 6, optimal c = 2,
    // residual variance Var[eps^2] = 2, so the ratio is 1/3.
    const int blocks = 50, per_block = 20000;
    std::vector<double> ratios;
    for (int blk = 0; blk < blocks; ++blk) {
        rng::Stream stream(rng::derive(40, blk));
        double sg = 0, sgg = 0, st = 0, stt = 0;
        for (int i = 0; i < per_block; ++i) {
            const double e = stream.normal();
            const double g = 2.0 * e + e * e;
            const double t = g - 2.0 * e;
            sg += g;
            sgg += g * g;
            st += t;
            stt += t * t;
        }
        const double var_g = (sgg - sg * sg / per_block) / (per_block - 1);
        const double var_t = (stt - st * st / per_block) / (per_block - 1);
        ratios.push_back(var_t / var_g);
    }
    double mean = 0;
    for (double r : ratios) mean += r;
    mean /= blocks;
    double var = 0;
    for (double r : ratios) var += (r - mean) * (r - mean);
    const double se = std::sqrt(var / (blocks - 1) / blocks);
    CHECK(std::abs(mean - 1.0 / 3.0) < 4.0 * se);
}

TEST_CASE("static variance experiment: amortized linear CV solves the quadratic family") {
    const QuadraticFamilyModel model = family_model(20);
    StaticVarianceConfig config;
    config.checkpoints = {3};
    config.coeff_steps = 1000;
    config.log_grid = {0, 1000};
    config.draws = 60;
    config.batch_size = 5;
    config.providers = {ProviderSpec::parse("context_free"), ProviderSpec::parse("amortized:8")};
    config.coeff_opt.learning_rate = 0.05;
    config.seeds = 3;
    config.seed = 7;

    const auto rows = static_variance_experiment(model, config);
    // 3 seeds x 1 checkpoint x 2 arms x 2 logged steps
    CHECK(rows.size() == 12);

    std::vector<double> untrained_cf, trained_amortized, trained_cf;
    for (const auto& row : rows) {
        CHECK(row.checkpoint == "early");
        if (row.cv_step == 0 && row.provider == "context_free") untrained_cf.push_back(row.ratio);
        if (row.cv_step == 1000 && row.provider == "amortized:8")
            trained_amortized.push_back(row.ratio);
        if (row.cv_step == 1000 && row.provider == "context_free") trained_cf.push_back(row.ratio);
    }
    for (double r : untrained_cf) CHECK(r == 1.0);  // zero coefficients, paired draws
    // the noise couplings are exactly linear in the context, so the
    // amortized provider can drive the ratio to nearly zero
    CHECK(median(trained_amortized) < 0.05);
    CHECK(median(trained_amortized) < median(trained_cf));
}

TEST_CASE("dynamic variance experiment: baseline at one, amortized ahead at the end") {
    const QuadraticFamilyModel model = family_model();
    DynamicVarianceConfig config;
    config.iterations = 60;
    config.checkpoints = {10, 60};
    config.draws = 40;
    config.batch_size = 4;
    config.providers = {ProviderSpec::parse("none"), ProviderSpec::parse("context_free"),
                        ProviderSpec::parse("amortized:8")};
    config.coeff_opt.learning_rate = 0.05;
    config.model_opt.learning_rate = 0.05;
    config.seeds = 10;
    config.seed = 11;
    config.jobs = 4;

    const auto rows = dynamic_variance_experiment(model, config);
    CHECK(rows.size() == 60);
    std::vector<double> none_last, context_free_last, amortized_last;
    for (const auto& row : rows) {
        if (row.provider == "none") CHECK(row.ratio == 1.0);
        if (row.cv_step != 60) continue;
        if (row.provider == "none") none_last.push_back(row.ratio);
        if (row.provider == "context_free") context_free_last.push_back(row.ratio);
        if (row.provider == "amortized:8") amortized_last.push_back(row.ratio);
    }
    CHECK(none_last.size() == 10);
    // medians over 10 seeds at the last checkpoint: amortized in front
    CHECK(median(amortized_last) <= median(context_free_last));
    CHECK(median(amortized_last) < median(none_last));
}

TEST_CASE("jobs > 1 reproduces the single-threaded experiment output") {
    const QuadraticFamilyModel model = family_model();
    DynamicVarianceConfig config;
    config.iterations = 25;
    config.checkpoints = {25};
    config.draws = 30;
    config.batch_size = 4;
    config.providers = {ProviderSpec::parse("context_free"), ProviderSpec::parse("amortized:8")};
    config.seeds = 3;
    config.seed = 21;

    config.jobs = 1;
    const auto serial = dynamic_variance_experiment(model, config);
    config.jobs = 4;
    const auto parallel = dynamic_variance_experiment(model, config);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].provider == parallel[i].provider);
        CHECK(serial[i].ratio == parallel[i].ratio);
        CHECK(serial[i].trace_ratio == parallel[i].trace_ratio);
    }
}

TEST_CASE("nelbo trace: a frozen context-free arm is bitwise the uncontrolled baseline") {
    const QuadraticFamilyModel model = family_model();
    NelboTraceConfig config;
    config.iterations = 30;
    config.batch_size = 4;
    config.nelbo_samples = 20;
    config.var_draws = 10;
    config.coeff_opt.learning_rate = 0.0;  // frozen: coefficients stay zero
    config.arms = {{ProviderSpec::parse("none"), ObjectiveKind::gradient_sum},
                   {ProviderSpec::parse("context_free"), ObjectiveKind::gradient_sum}};
    config.seed = 13;

    const auto rows = nelbo_trace_experiment(model, config);
    // 2 arms x 30 iters + 30 diff rows
    CHECK(rows.size() == 90);
    for (const auto& row : rows)
        if (row.method.rfind("diff:", 0) == 0) {
            CHECK(row.nelbo == 0.0);
            CHECK(row.grad_norm_var == 0.0);
        }
}

TEST_CASE("nelbo trace improves under a trained amortized control variate") {
    const QuadraticFamilyModel model = family_model(20);
    NelboTraceConfig config;
    config.iterations = 150;
    config.batch_size = 5;
    config.nelbo_samples = 30;
    config.var_draws = 20;
    config.model_opt.learning_rate = 0.03;
    config.coeff_opt.learning_rate = 0.05;
    config.arms = {{ProviderSpec::parse("none"), ObjectiveKind::squared_difference},
                   {ProviderSpec::parse("amortized:8"), ObjectiveKind::squared_difference}};
    config.seed = 17;

    const auto rows = nelbo_trace_experiment(model, config);
    double none_tail = 0.0, amortized_tail = 0.0, none_var = 0.0, amortized_var = 0.0;
    int count = 0;
    for (const auto& row : rows) {
        if (row.iter <= 100 || row.method.rfind("diff:", 0) == 0) continue;
        if (row.method == "uncontrolled") {
            none_tail += row.nelbo;
            none_var += row.grad_norm_var;
            ++count;
        } else {
            amortized_tail += row.nelbo;
            amortized_var += row.grad_norm_var;
        }
    }
    REQUIRE(count == 50);
    CHECK(amortized_var < none_var);
    CHECK(amortized_tail / count < none_tail / count + 0.05);
}

TEST_CASE("fig1: identical contexts are flagged and symmetric") {
    Fig1Config config;
    config.x[0] = config.x[1] = 1.2;
    config.y[0] = config.y[1] = 1.0;
    config.coeff_draws = 20000;
    config.var_draws = 20000;
    const Fig1Result result = illustrate_fig1(config);
    CHECK(result.degenerate);
    CHECK(result.coeff_batch[0] == doctest::Approx(result.coeff_batch[1]));
    CHECK(result.var_shared[0] == doctest::Approx(result.var_batch[0]));
}

TEST_CASE("fig1: per-batch coefficients dominate the shared one") {
    Fig1Config config;
    config.coeff_draws = 200000;
    config.var_draws = 200000;
    const Fig1Result result = illustrate_fig1(config);
    CHECK(!result.degenerate);
    CHECK(static_cast<int>(result.curve.size()) == 2 * config.grid_points);
    for (int k = 0; k < 2; ++k) {
        CHECK(result.var_batch[k] <= result.var_shared[k] * 1.01);
        CHECK(result.var_batch[k] <= result.var_uncontrolled[k] * 1.01);
    }
}

TEST_CASE("timing overhead preserves the configured schedule and work ordering") {
    const QuadraticFamilyModel model = family_model();
    TimingConfig config;
    config.repetitions = 20;
    config.steps_per_rep = 5;
    config.batch_size = 4;
    config.providers = {ProviderSpec::parse("none"), ProviderSpec::parse("context_free"),
                        ProviderSpec::parse("amortized:64-64")};
    const auto rows = timing_overhead(model, config);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.repetitions == 20);
        CHECK(row.steps_per_rep == 5);
        CHECK(row.mean_ms >= 0.0);
    }
    CHECK(rows[0].provider == "none");
    CHECK(rows[2].mean_ms >= rows[0].mean_ms);  // strictly more work per step
    CHECK(rows[1].mean_ms <= rows[2].mean_ms);
}
