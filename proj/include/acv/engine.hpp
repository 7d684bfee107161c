#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "acv/coefficients.hpp"
#include "acv/models.hpp"
#include "acv/noise.hpp"
#include "acv/objectives.hpp"

namespace acv {

// Controlled mini-batch gradient. Both the raw sum and the control term are
// scaled by N / (|B| S), so g_tilde = g_hat - cv_term holds exactly and the
// variance ratio is invariant to the scaling.
struct ControlledGradient {
    Eigen::VectorXd g_tilde;
    Eigen::VectorXd g_hat;
    Eigen::VectorXd cv_term;
};

// per_datum_grads row layout matches NoiseDraw: row b * S + s.
ControlledGradient controlled_gradient(const Eigen::MatrixXd& per_datum_grads,
                                       const BasisEval& basis, const CoefficientBlock& coeffs,
                                       double scale);

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) = 0;
    virtual std::unique_ptr<Optimizer> clone() const = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double learning_rate);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) override;
    std::unique_ptr<Optimizer> clone() const override { return std::make_unique<Sgd>(*this); }

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) override;
    std::unique_ptr<Optimizer> clone() const override { return std::make_unique<Adam>(*this); }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

struct OptimizerConfig {
    std::string kind = "adam";  // sgd | adam
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config);

struct StepReport {
    double objective_value = 0.0;
    double g_hat_norm = 0.0;
    double g_tilde_norm = 0.0;
};

// One alternating update: draw noise for the batch, take an optimizer step
// on the coefficient provider using the chosen objective (evaluated at the
// pre-update coefficients), then correct the already-sampled gradient with
// the post-update coefficients and step the model parameters.
StepReport alternating_step(const DoublyStochasticModel& model, CoefficientProvider& provider,
                            ObjectiveKind objective, Eigen::VectorXd& theta,
                            Optimizer& model_opt, Optimizer& coeff_opt,
                            std::span<const int> batch, std::uint64_t noise_seed,
                            int basis_order);

// Per-datum pathwise gradients for a batch at fixed theta; row b * S + s.
Eigen::MatrixXd batch_per_datum_grads(const DoublyStochasticModel& model,
                                      std::span<const int> batch, const NoiseDraw& noise,
                                      const Eigen::VectorXd& theta);

Eigen::MatrixXd batch_contexts(const DoublyStochasticModel& model, std::span<const int> batch);

}  // namespace acv
