#pragma once

#include <Eigen/Dense>
#include <functional>

namespace acv::quadrature {

// Gauss-Hermite rule rescaled for expectations under N(0, 1):
//   E[g(x)] ~= sum_i weights[i] * g(nodes[i]),   sum(weights) == 1.
// Exact for polynomials of degree <= 2n - 1.
struct GaussHermite {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

GaussHermite gauss_hermite(int n);

double expect_1d(const GaussHermite& rule, const std::function<double(double)>& g);

// Tensor-product rule over dims independent standard normals.
double expect_nd(int dims, int points_per_dim,
                 const std::function<double(const Eigen::VectorXd&)>& g);

}  // namespace acv::quadrature
