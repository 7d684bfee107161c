#include "acv/objectives.hpp"

#include <stdexcept>

namespace acv {

ObjectiveKind objective_from_string(const std::string& name) {
    if (name == "partial_gradients") return ObjectiveKind::partial_gradients;
    if (name == "gradient_sum") return ObjectiveKind::gradient_sum;
    if (name == "squared_difference") return ObjectiveKind::squared_difference;
    throw std::invalid_argument("unknown objective kind: " + name);
}

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::partial_gradients: return "partial_gradients";
        case ObjectiveKind::gradient_sum: return "gradient_sum";
        case ObjectiveKind::squared_difference: return "squared_difference";
    }
    return "?";
}

namespace {

void check_shapes(int batch, int param_dim, const BasisEval& basis, const CoefficientBlock& coeffs) {
    if (basis.samples != 1)
        throw std::invalid_argument("cv objective: expected a single-sample basis; average upstream for S > 1");
    if (basis.batch_size != batch || coeffs.batch() != batch)
        throw std::invalid_argument("cv objective: batch size mismatch");
    if (coeffs.param_dim() != param_dim || coeffs.feature_dim() != basis.feature_dim())
        throw std::invalid_argument("cv objective: coefficient block shape mismatch");
}

}  // namespace

ObjectiveEvaluation partial_gradients_objective(const Eigen::MatrixXd& per_datum_grads,
                                                const BasisEval& basis,
                                                const CoefficientBlock& coeffs) {
    const int batch = static_cast<int>(per_datum_grads.rows());
    const int p = static_cast<int>(per_datum_grads.cols());
    check_shapes(batch, p, basis, coeffs);

    ObjectiveEvaluation eval;
    eval.kind = ObjectiveKind::partial_gradients;
    eval.d_coeff.c.resize(batch);
    for (int b = 0; b < batch; ++b) {
        const Eigen::VectorXd w = basis.at(b, 0).transpose();
        const Eigen::VectorXd a = coeffs.c[b] * w;  // a_i = c_bi . w_b
        const Eigen::VectorXd g = per_datum_grads.row(b).transpose();
        eval.value += a.squaredNorm() - 2.0 * g.dot(a);
        eval.d_coeff.c[b] = 2.0 * (a - g) * w.transpose();
    }
    return eval;
}

ObjectiveEvaluation gradient_sum_objective(const Eigen::VectorXd& grad_sum,
                                           const BasisEval& basis,
                                           const CoefficientBlock& coeffs) {
    const int batch = coeffs.batch();
    check_shapes(batch, static_cast<int>(grad_sum.size()), basis, coeffs);

    ObjectiveEvaluation eval;
    eval.kind = ObjectiveKind::gradient_sum;
    eval.d_coeff.c.resize(batch);
    for (int b = 0; b < batch; ++b) {
        const Eigen::VectorXd w = basis.at(b, 0).transpose();
        const Eigen::VectorXd a = coeffs.c[b] * w;
        eval.value += a.squaredNorm() - 2.0 * grad_sum.dot(a);
        eval.d_coeff.c[b] = 2.0 * (a - grad_sum) * w.transpose();
    }
    return eval;
}

ObjectiveEvaluation squared_difference_objective(const Eigen::VectorXd& grad_sum,
                                                 const BasisEval& basis,
                                                 const CoefficientBlock& coeffs) {
    const int batch = coeffs.batch();
    check_shapes(batch, static_cast<int>(grad_sum.size()), basis, coeffs);

    Eigen::VectorXd resid = grad_sum;  // G_i - sum_b c_bi . w_b
    for (int b = 0; b < batch; ++b) resid -= coeffs.c[b] * basis.at(b, 0).transpose();

    ObjectiveEvaluation eval;
    eval.kind = ObjectiveKind::squared_difference;
    eval.value = resid.squaredNorm();
    eval.d_coeff.c.resize(batch);
    for (int b = 0; b < batch; ++b)
        eval.d_coeff.c[b] = -2.0 * resid * basis.at(b, 0);
    return eval;
}

ObjectiveEvaluation evaluate_objective(ObjectiveKind kind, const Eigen::MatrixXd& per_datum_grads,
                                       const BasisEval& basis, const CoefficientBlock& coeffs) {
    switch (kind) {
        case ObjectiveKind::partial_gradients:
            return partial_gradients_objective(per_datum_grads, basis, coeffs);
        case ObjectiveKind::gradient_sum:
            return gradient_sum_objective(per_datum_grads.colwise().sum().transpose(), basis, coeffs);
        case ObjectiveKind::squared_difference:
            return squared_difference_objective(per_datum_grads.colwise().sum().transpose(), basis,
                                                coeffs);
    }
    throw std::logic_error("evaluate_objective: unreachable");
}

}  // namespace acv
