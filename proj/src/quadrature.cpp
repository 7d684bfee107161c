#include "acv/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace acv::quadrature {

GaussHermite gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");

    // Golub-Welsch on the Jacobi matrix of the (physicists') Hermite
    // recurrence; off-diagonal entries sqrt(k/2).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double off = std::sqrt(k / 2.0);
        jacobi(k, k - 1) = off;
        jacobi(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("gauss_hermite: eigen decomposition failed");

    GaussHermite rule;
    // Rescale nodes by sqrt(2) to integrate against the standard normal
    // density; normalized first eigenvector components squared are the
    // probabilist weights directly.
    rule.nodes = solver.eigenvalues() * std::sqrt(2.0);
    rule.weights = solver.eigenvectors().row(0).transpose().array().square();
    return rule;
}

double expect_1d(const GaussHermite& rule, const std::function<double(double)>& g) {
    double acc = 0.0;
    for (int i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * g(rule.nodes[i]);
    return acc;
}

double expect_nd(int dims, int points_per_dim,
                 const std::function<double(const Eigen::VectorXd&)>& g) {
    if (dims < 1) throw std::invalid_argument("expect_nd: dims must be positive");
    const GaussHermite rule = gauss_hermite(points_per_dim);
    const int n = points_per_dim;

    Eigen::VectorXd x(dims);
    std::vector<int> idx(dims, 0);
    double acc = 0.0;
    while (true) {
        double w = 1.0;
        for (int d = 0; d < dims; ++d) {
            x[d] = rule.nodes[idx[d]];
            w *= rule.weights[idx[d]];
        }
        acc += w * g(x);

        int d = 0;
        while (d < dims && ++idx[d] == n) idx[d++] = 0;
        if (d == dims) break;
    }
    return acc;
}

}  // namespace acv::quadrature
