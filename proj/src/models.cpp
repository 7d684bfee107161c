#include "acv/models.hpp"

#include <cmath>
#include <stdexcept>

#include "acv/noise.hpp"
#include "acv/rng.hpp"

namespace acv {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

int chol_param_count(int dim) { return dim * (dim + 1) / 2; }

Eigen::MatrixXd chol_from_unconstrained(const Eigen::VectorXd& params, int dim) {
    if (params.size() != chol_param_count(dim))
        throw std::invalid_argument("chol_from_unconstrained: wrong parameter count");
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(dim, dim);
    int k = 0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j <= i; ++j, ++k)
            chol(i, j) = (i == j) ? std::exp(params[k]) : params[k];
    return chol;
}

Eigen::VectorXd unconstrained_from_chol(const Eigen::MatrixXd& chol_lower) {
    const int dim = static_cast<int>(chol_lower.rows());
    if ((chol_lower.diagonal().array() <= 0.0).any())
        throw std::invalid_argument("unconstrained_from_chol: diagonal must be strictly positive");
    Eigen::VectorXd params(chol_param_count(dim));
    int k = 0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j <= i; ++j, ++k)
            params[k] = (i == j) ? std::log(chol_lower(i, i)) : chol_lower(i, j);
    return params;
}

double gaussian_kl(const Eigen::VectorXd& m, const Eigen::MatrixXd& chol_lower) {
    const auto dim = m.size();
    if (chol_lower.rows() != dim || chol_lower.cols() != dim)
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    if ((chol_lower.diagonal().array() <= 0.0).any())
        throw std::invalid_argument("gaussian_kl: invalid Cholesky factor");
    const double log_det = chol_lower.diagonal().array().log().sum();
    return 0.5 * (chol_lower.squaredNorm() + m.squaredNorm() - static_cast<double>(dim)) - log_det;
}

double DoublyStochasticModel::nelbo_estimate(const Eigen::VectorXd& theta, int samples,
                                             std::uint64_t seed) const {
    if (samples < 1) throw std::invalid_argument("nelbo_estimate: samples must be >= 1");
    const int n = dataset_size();
    const NoiseDraw noise = sample_noise(seed, n, samples, noise_dim());
    double total = 0.0;
    for (int b = 0; b < n; ++b) {
        double acc = 0.0;
        for (int s = 0; s < samples; ++s)
            acc += per_datum_value(b, noise.at(b, s).transpose(), theta);
        total += acc / samples;
    }
    return total;
}

// --- quadratic instances ---

Eigen::VectorXd QuadraticSpec::theta_star() const { return h_mat.ldlt().solve(b_vec); }

double QuadraticSpec::smoothness() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h_mat).eigenvalues().maxCoeff();
}

double QuadraticSpec::strong_convexity() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h_mat).eigenvalues().minCoeff();
}

double QuadraticSpec::value(const Eigen::VectorXd& eps, const Eigen::VectorXd& theta) const {
    return 0.5 * theta.dot(h_mat * theta) - b_vec.dot(theta) - theta.dot(noise_coupling * eps);
}

Eigen::VectorXd QuadraticSpec::grad(const Eigen::VectorXd& eps, const Eigen::VectorXd& theta) const {
    return h_mat * theta - b_vec - noise_coupling * eps;
}

Eigen::VectorXd quad_per_datum_grad(const QuadraticSpec& spec, const Eigen::VectorXd& eps,
                                    const Eigen::VectorXd& theta) {
    if (theta.size() != spec.param_dim() || eps.size() != spec.noise_dim() ||
        spec.h_mat.rows() != spec.h_mat.cols() || spec.noise_coupling.rows() != spec.param_dim() ||
        spec.b_vec.size() != spec.param_dim())
        throw std::invalid_argument("quad_per_datum_grad: dimension mismatch");
    return spec.grad(eps, theta);
}

QuadraticModel::QuadraticModel(QuadraticSpec spec) : spec_(std::move(spec)) {}

double QuadraticModel::per_datum_value(int, const Eigen::VectorXd& eps,
                                       const Eigen::VectorXd& theta) const {
    return spec_.value(eps, theta);
}

Eigen::VectorXd QuadraticModel::per_datum_grad(int, const Eigen::VectorXd& eps,
                                               const Eigen::VectorXd& theta) const {
    return quad_per_datum_grad(spec_, eps, theta);
}

Eigen::VectorXd QuadraticModel::context_point(int) const {
    return Eigen::VectorXd::Ones(1);
}

QuadraticFamilyModel::QuadraticFamilyModel(QuadraticSpec base, Eigen::VectorXd rho,
                                           Eigen::VectorXd theta0)
    : base_(std::move(base)), rho_(std::move(rho)), theta0_(std::move(theta0)) {
    if (rho_.size() < 1) throw std::invalid_argument("QuadraticFamilyModel: empty family");
}

double QuadraticFamilyModel::per_datum_value(int b, const Eigen::VectorXd& eps,
                                             const Eigen::VectorXd& theta) const {
    const double n = static_cast<double>(rho_.size());
    return (0.5 * theta.dot(base_.h_mat * theta) - base_.b_vec.dot(theta)) / n -
           rho_[b] * theta.dot(base_.noise_coupling * eps);
}

Eigen::VectorXd QuadraticFamilyModel::per_datum_grad(int b, const Eigen::VectorXd& eps,
                                                     const Eigen::VectorXd& theta) const {
    const double n = static_cast<double>(rho_.size());
    return (base_.h_mat * theta - base_.b_vec) / n - rho_[b] * (base_.noise_coupling * eps);
}

Eigen::VectorXd QuadraticFamilyModel::context_point(int b) const {
    Eigen::VectorXd y(1);
    y[0] = rho_[b];
    return y;
}

Eigen::VectorXd QuadraticFamilyModel::initial_theta() const {
    if (theta0_.size() == param_dim()) return theta0_;
    return Eigen::VectorXd::Zero(param_dim());
}

// --- Bayesian logistic regression ---

namespace {

void check_label(double y) {
    if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("logistic regression: invalid label, expected 0 or 1");
}

}  // namespace

LogisticRegressionModel::LogisticRegressionModel(Eigen::MatrixXd features, Eigen::VectorXd labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
    if (features_.rows() != labels_.size())
        throw std::invalid_argument("LogisticRegressionModel: feature/label count mismatch");
    for (int i = 0; i < labels_.size(); ++i) check_label(labels_[i]);
}

int LogisticRegressionModel::param_dim() const {
    const int dw = weight_dim();
    return dw + chol_param_count(dw);
}

Eigen::VectorXd LogisticRegressionModel::mean_segment(const Eigen::VectorXd& theta) const {
    return theta.head(weight_dim());
}

Eigen::MatrixXd LogisticRegressionModel::chol_segment(const Eigen::VectorXd& theta) const {
    const int dw = weight_dim();
    return chol_from_unconstrained(theta.tail(chol_param_count(dw)), dw);
}

double logreg_per_datum_value(const Eigen::VectorXd& x, double y, const Eigen::VectorXd& eps,
                              const Eigen::VectorXd& theta, double n_data) {
    check_label(y);
    const int dw = static_cast<int>(x.size());
    const Eigen::VectorXd m = theta.head(dw);
    const Eigen::MatrixXd chol = chol_from_unconstrained(theta.tail(chol_param_count(dw)), dw);
    const Eigen::VectorXd w = m + chol * eps;
    const double z = w.dot(x);
    return softplus(z) - y * z + gaussian_kl(m, chol) / n_data;
}

Eigen::VectorXd logreg_per_datum_grad(const Eigen::VectorXd& x, double y,
                                      const Eigen::VectorXd& eps,
                                      const Eigen::VectorXd& theta, double n_data) {
    check_label(y);
    const int dw = static_cast<int>(x.size());
    if (eps.size() != dw || theta.size() != dw + chol_param_count(dw))
        throw std::invalid_argument("logreg_per_datum_grad: dimension mismatch");

    const Eigen::VectorXd m = theta.head(dw);
    const Eigen::MatrixXd chol = chol_from_unconstrained(theta.tail(chol_param_count(dw)), dw);
    const Eigen::VectorXd w = m + chol * eps;
    const double resid = sigmoid(w.dot(x)) - y;

    Eigen::VectorXd grad(theta.size());
    grad.head(dw) = resid * x + m / n_data;

    // Lower-triangle entries; chain rule through the log-diagonal storage.
    int k = dw;
    for (int i = 0; i < dw; ++i) {
        for (int j = 0; j <= i; ++j, ++k) {
            const double d_nll = resid * x[i] * eps[j];
            if (i == j) {
                const double l_ii = chol(i, i);
                grad[k] = d_nll * l_ii + (l_ii * l_ii - 1.0) / n_data;
            } else {
                grad[k] = d_nll + chol(i, j) / n_data;
            }
        }
    }
    return grad;
}

double LogisticRegressionModel::per_datum_value(int b, const Eigen::VectorXd& eps,
                                                const Eigen::VectorXd& theta) const {
    return logreg_per_datum_value(features_.row(b).transpose(), labels_[b], eps, theta,
                                  static_cast<double>(dataset_size()));
}

Eigen::VectorXd LogisticRegressionModel::per_datum_grad(int b, const Eigen::VectorXd& eps,
                                                        const Eigen::VectorXd& theta) const {
    return logreg_per_datum_grad(features_.row(b).transpose(), labels_[b], eps, theta,
                                 static_cast<double>(dataset_size()));
}

Eigen::VectorXd LogisticRegressionModel::context_point(int b) const {
    Eigen::VectorXd y(context_dim());
    y.head(weight_dim()) = features_.row(b).transpose();
    y[weight_dim()] = labels_[b];
    return y;
}

double LogisticRegressionModel::nelbo_estimate(const Eigen::VectorXd& theta, int samples,
                                               std::uint64_t seed) const {
    if (samples < 1) throw std::invalid_argument("nelbo_estimate: samples must be >= 1");
    const int dw = weight_dim();
    const Eigen::VectorXd m = mean_segment(theta);
    const Eigen::MatrixXd chol = chol_segment(theta);

    // One weight draw per sample, shared across data points; the estimator
    // stays unbiased and the likelihood term becomes a single matrix product.
    rng::Stream stream(seed);
    Eigen::MatrixXd weights(dw, samples);
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd eps(dw);
        for (int d = 0; d < dw; ++d) eps[d] = stream.normal();
        weights.col(s) = m + chol * eps;
    }
    const Eigen::MatrixXd logits = features_ * weights;  // N x samples
    double nll = 0.0;
    for (int b = 0; b < logits.rows(); ++b) {
        double acc = 0.0;
        for (int s = 0; s < samples; ++s)
            acc += softplus(logits(b, s)) - labels_[b] * logits(b, s);
        nll += acc / samples;
    }
    return nll + gaussian_kl(m, chol);
}

}  // namespace acv
