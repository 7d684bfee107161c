#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "acv/engine.hpp"
#include "acv/quadrature.hpp"
#include "test_support.hpp"

using namespace acv;
using test_support::random_matrix;
using test_support::random_vector;

namespace {

QuadraticSpec canonical_spec() {
    QuadraticSpec spec;
    spec.h_mat = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    spec.b_vec = Eigen::Vector2d::Zero();
    spec.noise_coupling = Eigen::Matrix2d::Identity();
    return spec;
}

}  // namespace

TEST_CASE("controlled gradient: zero coefficients leave the estimate untouched") {
    rng::Stream stream(1);
    const NoiseDraw noise = sample_noise(2, 3, 1, 2);
    const BasisEval basis = eval_basis(noise, 2);
    const Eigen::MatrixXd grads = random_matrix(stream, 3, 4);
    const ControlledGradient cg =
        controlled_gradient(grads, basis, CoefficientBlock::zero(3, 4, 4), 10.0 / 3.0);
    CHECK(cg.cv_term.norm() == 0.0);
    CHECK(cg.g_tilde == cg.g_hat);
}

TEST_CASE("controlled gradient: scalar arithmetic example") {
    NoiseDraw noise;
    noise.batch_size = 1;
    noise.samples = 1;
    noise.dim = 1;
    noise.eps = Eigen::MatrixXd::Constant(1, 1, 2.0);
    const BasisEval basis = eval_basis(noise, 1);
    Eigen::MatrixXd grads(1, 1);
    grads << 5.0;
    CoefficientBlock coeffs;
    coeffs.c = {Eigen::MatrixXd::Constant(1, 1, 2.0)};
    const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, 1.0);
    CHECK(cg.g_tilde[0] == doctest::Approx(1.0));
}

TEST_CASE("controlled gradient with the exact coupling is deterministic") {
    const QuadraticSpec spec = canonical_spec();
    Eigen::Vector2d theta(0.3, -0.8);
    const Eigen::VectorXd clean = spec.h_mat * theta - spec.b_vec;
    CoefficientBlock coeffs;
    coeffs.c = {-spec.noise_coupling};
    for (int r = 0; r < 10; ++r) {
        const NoiseDraw noise = sample_noise(rng::derive(77, r), 1, 1, 2);
        const BasisEval basis = eval_basis(noise, 1);
        Eigen::MatrixXd grads(1, 2);
        grads.row(0) = spec.grad(noise.eps.row(0).transpose(), theta).transpose();
        const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, 1.0);
        CHECK((cg.g_tilde - clean).norm() < 1e-14);
    }
}

TEST_CASE("sgd step") {
    Sgd sgd(0.5);
    Eigen::VectorXd theta(2);
    theta << 1.0, 1.0;

    SUBCASE("zero gradient leaves parameters unchanged") {
        const Eigen::VectorXd before = theta;
        sgd.step(theta, Eigen::VectorXd::Zero(2));
        CHECK(theta == before);
    }

    SUBCASE("arithmetic example") {
        Eigen::VectorXd grad(2);
        grad << 2.0, -2.0;
        sgd.step(theta, grad);
        CHECK(theta[0] == doctest::Approx(0.0));
        CHECK(theta[1] == doctest::Approx(2.0));
    }
}

TEST_CASE("sgd with a perfect control variate contracts inside the rate constant") {
    const QuadraticSpec spec = canonical_spec();
    const double l = spec.smoothness();
    const double h = spec.strong_convexity();
    const double eta = 1.0 / (4.0 * l);
    const double contraction = (1.0 - eta * h) * (1.0 - eta * h);
    const double rate = 1.0 - eta * h * (1.0 - 2.0 * l * eta);  // M = 0
    CHECK(contraction < rate);

    Sgd sgd(eta);
    Eigen::VectorXd theta(2);
    theta << 1.0, 1.0;
    CoefficientBlock coeffs;
    coeffs.c = {-spec.noise_coupling};
    for (int t = 0; t < 30; ++t) {
        const double before = theta.squaredNorm();
        const NoiseDraw noise = sample_noise(rng::derive(5, t), 1, 1, 2);
        Eigen::MatrixXd grads(1, 2);
        grads.row(0) = spec.grad(noise.eps.row(0).transpose(), theta).transpose();
        const ControlledGradient cg = controlled_gradient(grads, eval_basis(noise, 1), coeffs, 1.0);
        sgd.step(theta, cg.g_tilde);
        CHECK(theta.squaredNorm() / before <= contraction + 1e-12);
    }
}

TEST_CASE("adam first step moves by about the learning rate per coordinate") {
    Adam adam(0.1);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd grad(3);
    grad << 4.0, -0.25, 1e-3;
    adam.step(theta, grad);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(std::abs(theta[i]) - 0.1) < 1e-4);
        CHECK(theta[i] * grad[i] < 0.0);
    }
}

TEST_CASE("adam stays fixed under a zero gradient") {
    Adam adam(0.1);
    Eigen::VectorXd theta(2);
    theta << 0.4, -0.2;
    const Eigen::VectorXd before = theta;
    for (int t = 0; t < 5; ++t) adam.step(theta, Eigen::VectorXd::Zero(2));
    CHECK(theta == before);
}

TEST_CASE("adam matches the hand-computed three-step trajectory") {
    Adam adam(0.1);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
    const double grads[3] = {1.0, 1.0, -1.0};
    const double expected[3] = {-0.09999999900000002, -0.19999999799999935,
                                -0.22619925973062666};
    for (int t = 0; t < 3; ++t) {
        Eigen::VectorXd g(1);
        g << grads[t];
        adam.step(theta, g);
        CHECK(std::abs(theta[0] - expected[t]) < 1e-12);
    }
}

TEST_CASE("make_optimizer dispatches on kind") {
    OptimizerConfig config;
    config.kind = "sgd";
    CHECK(dynamic_cast<Sgd*>(make_optimizer(config).get()) != nullptr);
    config.kind = "adam";
    CHECK(dynamic_cast<Adam*>(make_optimizer(config).get()) != nullptr);
    config.kind = "momentum";
    CHECK_THROWS_AS(make_optimizer(config), std::invalid_argument);
}

TEST_CASE("alternating step rejects an empty batch") {
    const QuadraticModel model(canonical_spec());
    auto provider = make_none_provider(2, 2);
    Adam mo(0.01), co(0.01);
    Eigen::VectorXd theta = model.initial_theta();
    CHECK_THROWS_AS(
        alternating_step(model, *provider, ObjectiveKind::gradient_sum, theta, mo, co, {}, 1, 1),
        std::invalid_argument);
}

TEST_CASE("frozen zero provider reproduces the uncontrolled trajectory bitwise") {
    const QuadraticSpec base = canonical_spec();
    const QuadraticFamilyModel model(base, Eigen::VectorXd::LinSpaced(6, 0.5, 1.5));
    const std::vector<int> batch = {0, 2, 4};

    Eigen::VectorXd theta_none = model.initial_theta();
    Eigen::VectorXd theta_frozen = model.initial_theta();
    auto none = make_none_provider(2, 2);
    auto frozen = make_context_free_provider(2, 2);
    Adam mo_a(0.05), mo_b(0.05), co_a(0.05);
    Adam co_frozen(0.0);  // zero learning rate: coefficients stay at zero
    for (int t = 0; t < 20; ++t) {
        alternating_step(model, *none, ObjectiveKind::squared_difference, theta_none, mo_a, co_a,
                         batch, rng::derive(31, t), 1);
        alternating_step(model, *frozen, ObjectiveKind::squared_difference, theta_frozen, mo_b,
                         co_frozen, batch, rng::derive(31, t), 1);
        CHECK(theta_none == theta_frozen);
    }
}

TEST_CASE("alternating step is deterministic in the seed") {
    const QuadraticFamilyModel model(canonical_spec(), Eigen::VectorXd::LinSpaced(4, 0.8, 1.2));
    const std::vector<int> batch = {1, 3};

    const auto run = [&] {
        Eigen::VectorXd theta = model.initial_theta();
        auto provider = make_amortized_provider(1, 2, 2, {4}, 9);
        Adam mo(0.05), co(0.05);
        StepReport last{};
        for (int t = 0; t < 10; ++t)
            last = alternating_step(model, *provider, ObjectiveKind::gradient_sum, theta, mo, co,
                                    batch, rng::derive(3, t), 1);
        return std::make_pair(theta, last);
    };
    const auto [theta1, report1] = run();
    const auto [theta2, report2] = run();
    CHECK(theta1 == theta2);
    CHECK(report1.objective_value == report2.objective_value);
    CHECK(report1.g_tilde_norm == report2.g_tilde_norm);
}

TEST_CASE("alternating step applies exactly the directly assembled correction") {
    const QuadraticFamilyModel model(canonical_spec(), Eigen::VectorXd::LinSpaced(4, 0.6, 1.4));
    const std::vector<int> batch = {0, 3};
    const std::uint64_t noise_seed = 123;

    // fixed nonzero coefficients, frozen by a zero learning rate
    auto provider = make_context_free_provider(2, 2);
    rng::Stream stream(17);
    provider->set_params(random_vector(stream, 4, 0.3));

    Eigen::VectorXd theta_step = model.initial_theta();
    Sgd model_opt(0.1), frozen(0.0);
    alternating_step(model, *provider, ObjectiveKind::gradient_sum, theta_step, model_opt, frozen,
                     batch, noise_seed, 1);

    const NoiseDraw noise = sample_noise(noise_seed, 2, 1, 2);
    const BasisEval basis = eval_basis(noise, 1);
    const Eigen::MatrixXd grads =
        batch_per_datum_grads(model, batch, noise, model.initial_theta());
    const CoefficientBlock coeffs = provider->coefficients(batch_contexts(model, batch));
    const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, 4.0 / 2.0);
    Eigen::VectorXd theta_direct = model.initial_theta();
    Sgd replay(0.1);
    replay.step(theta_direct, cg.g_tilde);
    CHECK(theta_step == theta_direct);
}

TEST_CASE("controlled gradient expectation matches the uncontrolled one by quadrature") {
    const QuadraticSpec spec = canonical_spec();
    rng::Stream stream(7);
    Eigen::Vector2d theta(0.9, 0.2);
    const Eigen::VectorXd clean = spec.h_mat * theta - spec.b_vec;

    for (int trial = 0; trial < 5; ++trial) {
        CoefficientBlock coeffs;
        coeffs.c = {random_matrix(stream, 2, 4)};  // order-2 basis features
        for (int i = 0; i < 2; ++i) {
            const double mean = quadrature::expect_nd(2, 10, [&](const Eigen::VectorXd& eps) {
                NoiseDraw one;
                one.batch_size = 1;
                one.samples = 1;
                one.dim = 2;
                one.eps = eps.transpose();
                const BasisEval basis = eval_basis(one, 2);
                Eigen::MatrixXd grads(1, 2);
                grads.row(0) = spec.grad(eps, theta).transpose();
                return controlled_gradient(grads, basis, coeffs, 1.0).g_tilde[i];
            });
            CHECK(std::abs(mean - clean[i]) < 1e-8);
        }
    }
}

TEST_CASE("stationary points are preserved for arbitrary coefficients") {
    const QuadraticSpec spec = canonical_spec();
    const Eigen::VectorXd theta_star = spec.theta_star();
    rng::Stream stream(8);
    for (int trial = 0; trial < 5; ++trial) {
        CoefficientBlock coeffs;
        coeffs.c = {random_matrix(stream, 2, 2, 2.0)};
        for (int i = 0; i < 2; ++i) {
            const double mean = quadrature::expect_nd(2, 10, [&](const Eigen::VectorXd& eps) {
                NoiseDraw one;
                one.batch_size = 1;
                one.samples = 1;
                one.dim = 2;
                one.eps = eps.transpose();
                Eigen::MatrixXd grads(1, 2);
                grads.row(0) = spec.grad(eps, theta_star).transpose();
                return controlled_gradient(grads, eval_basis(one, 1), coeffs, 1.0).g_tilde[i];
            });
            CHECK(std::abs(mean) < 1e-8);
        }
    }
}

TEST_CASE("multi-sample draws average per-sample controlled gradients") {
    rng::Stream stream(88);
    const NoiseDraw noise = sample_noise(6, 2, 3, 2);  // S = 3
    const BasisEval basis = eval_basis(noise, 1);
    const Eigen::MatrixXd grads = random_matrix(stream, 6, 2);
    CoefficientBlock coeffs;
    coeffs.c = {random_matrix(stream, 2, 2), random_matrix(stream, 2, 2)};

    const double scale = 5.0 / (2.0 * 3.0);  // N / (|B| S)
    const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, scale);
    Eigen::Vector2d expect = Eigen::Vector2d::Zero();
    for (int b = 0; b < 2; ++b)
        for (int s = 0; s < 3; ++s)
            expect += grads.row(b * 3 + s).transpose() -
                      coeffs.c[b] * basis.at(b, s).transpose();
    expect *= scale;
    CHECK((cg.g_tilde - expect).norm() < 1e-12);
}
