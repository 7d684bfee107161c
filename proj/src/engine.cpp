#include "acv/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace acv {

ControlledGradient controlled_gradient(const Eigen::MatrixXd& per_datum_grads,
                                       const BasisEval& basis, const CoefficientBlock& coeffs,
                                       double scale) {
    const int batch = basis.batch_size;
    const int samples = basis.samples;
    const int p = static_cast<int>(per_datum_grads.cols());
    if (per_datum_grads.rows() != batch * samples)
        throw std::invalid_argument("controlled_gradient: gradient rows do not match basis draws");
    if (coeffs.batch() != batch || coeffs.param_dim() != p ||
        coeffs.feature_dim() != basis.feature_dim())
        throw std::invalid_argument("controlled_gradient: coefficient block shape mismatch");

    ControlledGradient out;
    out.g_hat = Eigen::VectorXd::Zero(p);
    out.cv_term = Eigen::VectorXd::Zero(p);
    for (int b = 0; b < batch; ++b) {
        for (int s = 0; s < samples; ++s) {
            out.g_hat += per_datum_grads.row(b * samples + s).transpose();
            out.cv_term += coeffs.c[b] * basis.at(b, s).transpose();
        }
    }
    out.g_hat *= scale;
    out.cv_term *= scale;
    out.g_tilde = out.g_hat - out.cv_term;
    return out;
}

Sgd::Sgd(double learning_rate) : lr_(learning_rate) {
    if (lr_ < 0.0) throw std::invalid_argument("Sgd: learning rate must be nonnegative");
}

void Sgd::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    params -= lr_ * grad;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    if (lr_ < 0.0) throw std::invalid_argument("Adam: learning rate must be nonnegative");
    if (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0)
        throw std::invalid_argument("Adam: betas must lie in [0, 1)");
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (m_.size() != params.size()) {
        m_ = Eigen::VectorXd::Zero(params.size());
        v_ = Eigen::VectorXd::Zero(params.size());
        t_ = 0;
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.array().square().matrix();
    const double m_corr = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double v_corr = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -=
        lr_ * (m_.array() / m_corr) / ((v_.array() / v_corr).sqrt() + eps_);
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config) {
    if (config.kind == "sgd") return std::make_unique<Sgd>(config.learning_rate);
    if (config.kind == "adam")
        return std::make_unique<Adam>(config.learning_rate, config.beta1, config.beta2,
                                      config.epsilon);
    throw std::invalid_argument("make_optimizer: unknown kind " + config.kind);
}

Eigen::MatrixXd batch_per_datum_grads(const DoublyStochasticModel& model,
                                      std::span<const int> batch, const NoiseDraw& noise,
                                      const Eigen::VectorXd& theta) {
    Eigen::MatrixXd grads(noise.eps.rows(), model.param_dim());
    for (int b = 0; b < static_cast<int>(batch.size()); ++b)
        for (int s = 0; s < noise.samples; ++s)
            grads.row(b * noise.samples + s) =
                model.per_datum_grad(batch[b], noise.at(b, s).transpose(), theta).transpose();
    return grads;
}

Eigen::MatrixXd batch_contexts(const DoublyStochasticModel& model, std::span<const int> batch) {
    Eigen::MatrixXd contexts(batch.size(), model.context_dim());
    for (int b = 0; b < static_cast<int>(batch.size()); ++b)
        contexts.row(b) = model.context_point(batch[b]).transpose();
    return contexts;
}

StepReport alternating_step(const DoublyStochasticModel& model, CoefficientProvider& provider,
                            ObjectiveKind objective, Eigen::VectorXd& theta,
                            Optimizer& model_opt, Optimizer& coeff_opt,
                            std::span<const int> batch, std::uint64_t noise_seed,
                            int basis_order) {
    if (batch.empty()) throw std::invalid_argument("alternating_step: empty batch");

    const int bsz = static_cast<int>(batch.size());
    const NoiseDraw noise = sample_noise(noise_seed, bsz, 1, model.noise_dim());
    const BasisEval basis = eval_basis(noise, basis_order);
    const Eigen::MatrixXd grads = batch_per_datum_grads(model, batch, noise, theta);
    const Eigen::MatrixXd contexts = batch_contexts(model, batch);

    StepReport report;
    if (provider.param_count() > 0) {
        const CoefficientBlock coeffs = provider.coefficients(contexts);
        const ObjectiveEvaluation eval = evaluate_objective(objective, grads, basis, coeffs);
        report.objective_value = eval.value;
        Eigen::VectorXd phi = provider.params();
        coeff_opt.step(phi, provider.param_grad(eval.d_coeff));
        provider.set_params(phi);
    }

    // Correct the already-sampled gradient with the freshly updated
    // coefficients; no noise is redrawn between the two updates.
    const CoefficientBlock coeffs = provider.coefficients(contexts);
    const double scale = static_cast<double>(model.dataset_size()) / bsz;
    const ControlledGradient cg = controlled_gradient(grads, basis, coeffs, scale);
    model_opt.step(theta, cg.g_tilde);

    report.g_hat_norm = cg.g_hat.norm();
    report.g_tilde_norm = cg.g_tilde.norm();
    return report;
}

}  // namespace acv
