#pragma once

#include <Eigen/Dense>
#include <string>

#include "acv/coefficients.hpp"
#include "acv/noise.hpp"

namespace acv {

// The three surrogates for Tr(Cov[controlled gradient]) used to train the
// coefficient providers. They share the same expected minimizer; the cheap
// ones trade extra per-draw variance for not needing per-datum gradients.
enum class ObjectiveKind { partial_gradients, gradient_sum, squared_difference };

ObjectiveKind objective_from_string(const std::string& name);
std::string to_string(ObjectiveKind kind);

struct ObjectiveEvaluation {
    double value = 0.0;
    CoefficientBlock d_coeff;  // exact derivative of value w.r.t. every coefficient
    ObjectiveKind kind = ObjectiveKind::partial_gradients;
};

// value = sum_i sum_b [(c_bi . w_b)^2 - 2 g_bi (c_bi . w_b)]
ObjectiveEvaluation partial_gradients_objective(const Eigen::MatrixXd& per_datum_grads,
                                                const BasisEval& basis,
                                                const CoefficientBlock& coeffs);

// value = sum_i sum_b [(c_bi . w_b)^2 - 2 G_i (c_bi . w_b)], G = batch gradient sum
ObjectiveEvaluation gradient_sum_objective(const Eigen::VectorXd& grad_sum,
                                           const BasisEval& basis,
                                           const CoefficientBlock& coeffs);

// value = sum_i (G_i - sum_b c_bi . w_b)^2
ObjectiveEvaluation squared_difference_objective(const Eigen::VectorXd& grad_sum,
                                                 const BasisEval& basis,
                                                 const CoefficientBlock& coeffs);

// Dispatch on kind; per_datum_grads is batch x P with single-sample basis.
ObjectiveEvaluation evaluate_objective(ObjectiveKind kind,
                                       const Eigen::MatrixXd& per_datum_grads,
                                       const BasisEval& basis,
                                       const CoefficientBlock& coeffs);

}  // namespace acv
