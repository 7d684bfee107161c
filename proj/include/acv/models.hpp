#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>

namespace acv {

double sigmoid(double z);
double softplus(double z);  // log(1 + exp(z)), overflow-safe

// Lower-triangular Cholesky factors are optimized through an unconstrained
// parametrization: row-major lower triangle, diagonal entries stored as
// logs. The map is a bijection onto factors with strictly positive diagonal.
int chol_param_count(int dim);
Eigen::MatrixXd chol_from_unconstrained(const Eigen::VectorXd& params, int dim);
Eigen::VectorXd unconstrained_from_chol(const Eigen::MatrixXd& chol_lower);

// KL(N(m, L L^T) || N(0, I))
double gaussian_kl(const Eigen::VectorXd& m, const Eigen::MatrixXd& chol_lower);

// An objective of the form sum_b E_eps[f_b(eps, theta)], exposing per-datum
// values and exact pathwise gradients. The mini-batch estimator
// (N / (|B| S)) sum_{b in B} sum_s f_b(eps_b^s, theta) is unbiased for it.
class DoublyStochasticModel {
public:
    virtual ~DoublyStochasticModel() = default;

    virtual int dataset_size() const = 0;  // N
    virtual int param_dim() const = 0;     // P
    virtual int noise_dim() const = 0;     // D
    virtual int context_dim() const = 0;

    virtual double per_datum_value(int b, const Eigen::VectorXd& eps,
                                   const Eigen::VectorXd& theta) const = 0;
    virtual Eigen::VectorXd per_datum_grad(int b, const Eigen::VectorXd& eps,
                                           const Eigen::VectorXd& theta) const = 0;
    virtual Eigen::VectorXd context_point(int b) const = 0;
    virtual Eigen::VectorXd initial_theta() const {
        return Eigen::VectorXd::Zero(param_dim());
    }

    // Full-data Monte Carlo estimate of the objective (the NELBO for the
    // variational models), averaged over `samples` noise draws.
    virtual double nelbo_estimate(const Eigen::VectorXd& theta, int samples,
                                  std::uint64_t seed) const;
};

// Quadratic instance with closed-form optimum and curvature constants:
//   f(eps, theta) = 1/2 theta^T H theta - b^T theta - theta^T B eps.
struct QuadraticSpec {
    Eigen::MatrixXd h_mat;           // symmetric positive definite, P x P
    Eigen::VectorXd b_vec;           // P
    Eigen::MatrixXd noise_coupling;  // B, P x D

    int param_dim() const { return static_cast<int>(h_mat.rows()); }
    int noise_dim() const { return static_cast<int>(noise_coupling.cols()); }
    Eigen::VectorXd theta_star() const;
    double smoothness() const;        // L = lambda_max(H)
    double strong_convexity() const;  // H = lambda_min(H)
    double value(const Eigen::VectorXd& eps, const Eigen::VectorXd& theta) const;
    Eigen::VectorXd grad(const Eigen::VectorXd& eps, const Eigen::VectorXd& theta) const;
};

// H theta - b - B eps, with shape validation.
Eigen::VectorXd quad_per_datum_grad(const QuadraticSpec& spec, const Eigen::VectorXd& eps,
                                    const Eigen::VectorXd& theta);

// Single-datum (N = 1) wrapper around a QuadraticSpec.
class QuadraticModel : public DoublyStochasticModel {
public:
    explicit QuadraticModel(QuadraticSpec spec);

    int dataset_size() const override { return 1; }
    int param_dim() const override { return spec_.param_dim(); }
    int noise_dim() const override { return spec_.noise_dim(); }
    int context_dim() const override { return 1; }
    double per_datum_value(int b, const Eigen::VectorXd& eps,
                           const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd per_datum_grad(int b, const Eigen::VectorXd& eps,
                                   const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd context_point(int b) const override;
    const QuadraticSpec& spec() const { return spec_; }

private:
    QuadraticSpec spec_;
};

// N-datum quadratic family sharing one curvature but with per-datum noise
// coupling rho_b * B. The context point carries rho_b, so the optimal
// per-datum coefficients are an exactly learnable function of the context:
//   f_b(eps, theta) = (1/N) (1/2 theta^T H theta - b^T theta) - theta^T (rho_b B) eps.
class QuadraticFamilyModel : public DoublyStochasticModel {
public:
    QuadraticFamilyModel(QuadraticSpec base, Eigen::VectorXd rho,
                         Eigen::VectorXd theta0 = Eigen::VectorXd());

    int dataset_size() const override { return static_cast<int>(rho_.size()); }
    int param_dim() const override { return base_.param_dim(); }
    int noise_dim() const override { return base_.noise_dim(); }
    int context_dim() const override { return 1; }
    double per_datum_value(int b, const Eigen::VectorXd& eps,
                           const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd per_datum_grad(int b, const Eigen::VectorXd& eps,
                                   const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd context_point(int b) const override;
    Eigen::VectorXd initial_theta() const override;

    const QuadraticSpec& base() const { return base_; }
    double rho(int b) const { return rho_[b]; }

private:
    QuadraticSpec base_;
    Eigen::VectorXd rho_;
    Eigen::VectorXd theta0_;
};

// Bayesian logistic regression with a unit Gaussian prior on the weights and
// a full-covariance Gaussian approximate posterior q = N(m, L L^T).
//
//   theta = [m (D_w entries); unconstrained Cholesky (D_w (D_w + 1) / 2)]
//   f_b(eps, theta) = NLL(y_b | x_b, w = m + L eps) + (1/N) KL(q || prior)
//
// Each per-datum term carries its 1/N share of the KL so that the scaled
// mini-batch sum stays unbiased for the full NELBO.
class LogisticRegressionModel : public DoublyStochasticModel {
public:
    LogisticRegressionModel(Eigen::MatrixXd features, Eigen::VectorXd labels);

    int dataset_size() const override { return static_cast<int>(labels_.size()); }
    int param_dim() const override;
    int noise_dim() const override { return static_cast<int>(features_.cols()); }
    int context_dim() const override { return static_cast<int>(features_.cols()) + 1; }
    double per_datum_value(int b, const Eigen::VectorXd& eps,
                           const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd per_datum_grad(int b, const Eigen::VectorXd& eps,
                                   const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd context_point(int b) const override;
    double nelbo_estimate(const Eigen::VectorXd& theta, int samples,
                          std::uint64_t seed) const override;

    int weight_dim() const { return static_cast<int>(features_.cols()); }
    Eigen::VectorXd mean_segment(const Eigen::VectorXd& theta) const;
    Eigen::MatrixXd chol_segment(const Eigen::VectorXd& theta) const;

private:
    Eigen::MatrixXd features_;
    Eigen::VectorXd labels_;
};

// Pathwise gradient of one logistic term, NLL + (1/N) KL, with respect to
// [m; unconstrained Cholesky]. Free-standing so it can be checked in
// isolation against finite differences.
Eigen::VectorXd logreg_per_datum_grad(const Eigen::VectorXd& x, double y,
                                      const Eigen::VectorXd& eps,
                                      const Eigen::VectorXd& theta, double n_data);

double logreg_per_datum_value(const Eigen::VectorXd& x, double y,
                              const Eigen::VectorXd& eps,
                              const Eigen::VectorXd& theta, double n_data);

}  // namespace acv
