#include "acv/theory.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "acv/quadrature.hpp"
#include "acv/rng.hpp"

namespace acv {

bool TheoremSpec::perfect_cv() const {
    return (quad.noise_coupling - cv_matrix).norm() == 0.0;
}

double TheoremSpec::m_const() const {
    return perfect_cv() ? 0.0 : std::numeric_limits<double>::infinity();
}

double TheoremSpec::m_bar() const { return (quad.noise_coupling - cv_matrix).squaredNorm(); }

double TheoremSpec::rate_c() const {
    const double l = smoothness();
    const double h = strong_convexity();
    return 1.0 - eta * h * (1.0 - eta * (2.0 * l + m_const()));
}

double TheoremSpec::rate_c_bar() const {
    const double l = smoothness();
    const double h = strong_convexity();
    return 1.0 - eta * h * (1.0 - 2.0 * l * eta);
}

namespace {

// Kahan-compensated accumulator; keeps seed averaging reproducible under
// reassociation-hostile optimization flags.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

TrajectoryStats run_controlled_sgd(const TheoremSpec& spec, const Eigen::VectorXd& theta0,
                                   int steps, int seeds, std::uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("run_controlled_sgd: steps must be >= 1");
    if (seeds < 1) throw std::invalid_argument("run_controlled_sgd: seeds must be >= 1");

    const Eigen::VectorXd theta_star = spec.quad.theta_star();
    const Eigen::MatrixXd residual = spec.quad.noise_coupling - spec.cv_matrix;
    const int dim = spec.quad.noise_dim();

    std::vector<CompensatedSum> sum(steps + 1), sum_sq(steps + 1);
    for (int r = 0; r < seeds; ++r) {
        Eigen::VectorXd theta = theta0;
        for (int t = 0; t <= steps; ++t) {
            const double d2 = (theta - theta_star).squaredNorm();
            sum[t].add(d2);
            sum_sq[t].add(d2 * d2);
            if (t == steps) break;
            rng::Stream stream(rng::derive(seed, static_cast<std::uint64_t>(r),
                                           static_cast<std::uint64_t>(t)));
            Eigen::VectorXd eps(dim);
            for (int d = 0; d < dim; ++d) eps[d] = stream.normal();
            theta -= spec.eta * (spec.quad.h_mat * theta - spec.quad.b_vec - residual * eps);
        }
    }

    TrajectoryStats stats;
    stats.seeds = seeds;
    stats.mean_sq_dist.resize(steps + 1);
    stats.stderr_sq_dist.resize(steps + 1);
    for (int t = 0; t <= steps; ++t) {
        const double mean = sum[t].sum / seeds;
        stats.mean_sq_dist[t] = mean;
        if (seeds > 1) {
            const double var = std::max(0.0, (sum_sq[t].sum - seeds * mean * mean) / (seeds - 1));
            stats.stderr_sq_dist[t] = std::sqrt(var / seeds);
        } else {
            stats.stderr_sq_dist[t] = 0.0;
        }
    }
    return stats;
}

double theorem1_bound(const TheoremSpec& spec, const Eigen::VectorXd& theta0, int t) {
    const double limit = 1.0 / (2.0 * spec.smoothness() + spec.m_const());
    if (spec.eta > limit) {
        std::ostringstream msg;
        msg << "theorem1_bound: eta = " << spec.eta
            << " exceeds the admissible step size 1/(2L+M) = " << limit;
        throw std::invalid_argument(msg.str());
    }
    const double dist0 = (theta0 - spec.quad.theta_star()).squaredNorm();
    return std::pow(spec.rate_c(), t) * dist0;
}

double assumption4_bound(const TheoremSpec& spec, const Eigen::VectorXd& theta0, int t) {
    const double limit = 1.0 / (2.0 * spec.smoothness());
    if (spec.eta > limit) {
        std::ostringstream msg;
        msg << "assumption4_bound: eta = " << spec.eta
            << " exceeds the admissible step size 1/(2L) = " << limit;
        throw std::invalid_argument(msg.str());
    }
    const double c_bar = spec.rate_c_bar();
    const double dist0 = (theta0 - spec.quad.theta_star()).squaredNorm();
    const double pow_t = std::pow(c_bar, t);
    const double noise = 2.0 * spec.eta * spec.eta * spec.m_bar();
    // geometric series (1 + c_bar + ... + c_bar^{t-1}); closed form except at c_bar == 1
    const double series = (c_bar == 1.0) ? static_cast<double>(t) : (1.0 - pow_t) / (1.0 - c_bar);
    return pow_t * dist0 + noise * series;
}

CocoercivityReport verify_lemma_cocoercivity(const QuadraticSpec& spec, int probes,
                                             std::uint64_t seed) {
    if (probes < 1) throw std::invalid_argument("verify_lemma_cocoercivity: probes must be >= 1");

    const double l = spec.smoothness();
    const Eigen::VectorXd theta_star = spec.theta_star();
    const int p = spec.param_dim();
    const int d = spec.noise_dim();
    // grad f and f are at most quadratic in eps, so a handful of nodes is exact.
    const int nodes = 8;

    CocoercivityReport report;
    report.probes = probes;
    report.max_violation = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < probes; ++k) {
        rng::Stream stream(rng::derive(seed, static_cast<std::uint64_t>(k)));
        Eigen::VectorXd theta(p);
        for (int i = 0; i < p; ++i) theta[i] = 3.0 * stream.normal();

        const double lhs = quadrature::expect_nd(d, nodes, [&](const Eigen::VectorXd& eps) {
            return (spec.grad(eps, theta) - spec.grad(eps, theta_star)).squaredNorm();
        }) / (2.0 * l);
        const double rhs = quadrature::expect_nd(d, nodes, [&](const Eigen::VectorXd& eps) {
            return spec.value(eps, theta) - spec.value(eps, theta_star);
        });
        report.max_violation = std::max(report.max_violation, lhs - rhs);
    }
    return report;
}

}  // namespace acv
