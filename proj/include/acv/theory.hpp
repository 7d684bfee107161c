#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "acv/models.hpp"

namespace acv {

// Synthetic convergence-rate instance: SGD on the quadratic f with the
// linear control term c(eps, theta) = -cv_matrix * eps, so the controlled
// update direction is H theta - b - (B - cv_matrix) eps. With cv_matrix == B
// the control is perfect (M = 0); otherwise the controlled-gradient norm at
// the optimum is bounded by m_bar = ||B - cv_matrix||_F^2.
struct TheoremSpec {
    QuadraticSpec quad;
    Eigen::MatrixXd cv_matrix;  // P x D
    double eta = 0.0;

    double smoothness() const { return quad.smoothness(); }
    double strong_convexity() const { return quad.strong_convexity(); }
    bool perfect_cv() const;
    // 0 for a perfect control variate; +infinity otherwise (no finite
    // constant satisfies the efficient-control-variate inequality once the
    // residual coupling is nonzero).
    double m_const() const;
    double m_bar() const;

    double rate_c() const;      // 1 - eta H (1 - eta (2L + M))
    double rate_c_bar() const;  // 1 - eta H (1 - 2 L eta)
};

struct TrajectoryStats {
    std::vector<double> mean_sq_dist;    // E||theta_t - theta*||^2 for t = 0..T
    std::vector<double> stderr_sq_dist;  // standard error over seeds (0 when seeds == 1)
    int seeds = 0;
};

// Runs theta_t = theta_{t-1} - eta (grad f(eps, theta_{t-1}) - c(eps, theta_{t-1}))
// with fresh noise per step, independently substreamed per (seed, step).
TrajectoryStats run_controlled_sgd(const TheoremSpec& spec, const Eigen::VectorXd& theta0,
                                   int steps, int seeds, std::uint64_t seed);

// c^t ||theta0 - theta*||^2; requires eta <= 1 / (2L + M).
double theorem1_bound(const TheoremSpec& spec, const Eigen::VectorXd& theta0, int t);

// c_bar^t ||theta0 - theta*||^2 + 2 eta^2 m_bar (1 - c_bar^t) / (1 - c_bar);
// requires eta <= 1 / (2L). The second term tends to the noise floor
// 2 eta^2 m_bar / (1 - c_bar).
double assumption4_bound(const TheoremSpec& spec, const Eigen::VectorXd& theta0, int t);

struct CocoercivityReport {
    int probes = 0;
    double max_violation = 0.0;  // max over probes of LHS - RHS (<= 0 when the lemma holds)
};

// Checks (1 / 2L) E||grad f(eps, theta) - grad f(eps, theta*)||^2
//          <= E[f(eps, theta) - f(eps, theta*)]
// at random theta, with the eps-expectations evaluated by Gauss-Hermite
// quadrature.
CocoercivityReport verify_lemma_cocoercivity(const QuadraticSpec& spec, int probes,
                                             std::uint64_t seed);

}  // namespace acv
