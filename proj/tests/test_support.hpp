#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "acv/rng.hpp"

namespace test_support {

// |a - b| / max(1, |a|, |b|); the max(1, .) floor keeps near-zero gradients
// from blowing up the relative error.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite-difference gradient with per-coordinate step h * (1 + |x_i|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
    Eigen::VectorXd grad(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * (1.0 + std::abs(x[i]));
        probe[i] = x[i] + step;
        const double up = f(probe);
        probe[i] = x[i] - step;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Max relative error of an analytic gradient against central differences.
inline double max_grad_rel_err(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& analytic, const Eigen::VectorXd& x,
                               double h = 1e-6) {
    const Eigen::VectorXd fd = fd_gradient(f, x, h);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], fd[i]));
    return worst;
}

inline Eigen::VectorXd random_vector(acv::rng::Stream& stream, int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * stream.normal();
    return v;
}

inline Eigen::MatrixXd random_matrix(acv::rng::Stream& stream, int rows, int cols,
                                     double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * stream.normal();
    return m;
}

// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(acv::rng::Stream& stream, int n, double lo = 0.5,
                                  double hi = 4.0) {
    const Eigen::MatrixXd a = random_matrix(stream, n, n);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd eig(n);
    for (int i = 0; i < n; ++i) eig[i] = lo + (hi - lo) * stream.uniform();
    return q * eig.asDiagonal() * q.transpose();
}

}  // namespace test_support
