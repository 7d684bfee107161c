#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace acv {

// Control variate coefficients for one mini-batch: for batch element b,
// c[b] is a P x (K*D) matrix whose row i weights the basis features of the
// controlled gradient component i. An all-zero block is exactly the
// uncontrolled estimator.
struct CoefficientBlock {
    std::vector<Eigen::MatrixXd> c;

    static CoefficientBlock zero(int batch, int param_dim, int feature_dim);
    int batch() const { return static_cast<int>(c.size()); }
    int param_dim() const { return c.empty() ? 0 : static_cast<int>(c[0].rows()); }
    int feature_dim() const { return c.empty() ? 0 : static_cast<int>(c[0].cols()); }
    bool all_finite() const;
};

// Layer activations cached by a forward pass, consumed by backward. The
// revision stamp ties the cache to the parameter state that produced it.
struct NetCache {
    std::vector<Eigen::MatrixXd> inputs;    // input to each layer, batch x fan_in
    std::vector<Eigen::MatrixXd> preacts;   // pre-activation of each layer
    std::uint64_t revision = 0;
    int batch = 0;
};

// Fully connected network with ReLU hidden layers and an identity output
// layer, sized [in, h_1, ..., h_m, out]; m may be zero (a single linear
// map). Forward/backward are hand-rolled so gradients with respect to the
// parameters are exact and deterministic; d ReLU at exactly 0 is taken as 0.
class RecognitionNet {
public:
    RecognitionNet() = default;
    explicit RecognitionNet(std::vector<int> layer_sizes);  // zero weights and biases

    int input_dim() const { return sizes_.empty() ? 0 : sizes_.front(); }
    int output_dim() const { return sizes_.empty() ? 0 : sizes_.back(); }
    int layer_count() const { return static_cast<int>(weights_.size()); }
    const std::vector<int>& layer_sizes() const { return sizes_; }
    int param_count() const;

    Eigen::VectorXd params() const;
    void set_params(const Eigen::VectorXd& flat);

    const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
    const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }
    std::uint64_t revision() const { return revision_; }

    // contexts: batch x input_dim; returns batch x output_dim.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& contexts, NetCache* cache = nullptr) const;

    // Reverse-mode gradient of sum_{b,o} upstream(b,o) * output(b,o) with
    // respect to the flat parameter vector. The cache must come from a
    // forward pass at the current parameters.
    Eigen::VectorXd backward(const NetCache& cache, const Eigen::MatrixXd& upstream) const;

    void save(std::ostream& out) const;
    static RecognitionNet load(std::istream& in);

private:
    friend RecognitionNet xavier_init(const std::vector<int>&, std::uint64_t);
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> weights_;  // fan_out x fan_in
    std::vector<Eigen::VectorXd> biases_;
    std::uint64_t revision_ = 0;
};

// Weights uniform on +-sqrt(6 / (fan_in + fan_out)), biases zero.
RecognitionNet xavier_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

// Source of coefficient blocks, trainable through the control variate
// objectives. coefficients() caches whatever backward needs; param_grad()
// pulls the objective's d/d-coefficients back onto the provider parameters.
class CoefficientProvider {
public:
    virtual ~CoefficientProvider() = default;
    virtual std::string kind() const = 0;
    virtual CoefficientBlock coefficients(const Eigen::MatrixXd& contexts) = 0;
    virtual int param_count() const = 0;
    virtual Eigen::VectorXd params() const = 0;
    virtual void set_params(const Eigen::VectorXd& flat) = 0;
    virtual Eigen::VectorXd param_grad(const CoefficientBlock& d_coeff) = 0;
    virtual std::unique_ptr<CoefficientProvider> clone() const = 0;
};

// Always-zero coefficients; the uncontrolled baseline.
std::unique_ptr<CoefficientProvider> make_none_provider(int param_dim, int feature_dim);

// One optimizable block shared by every batch element, initialized to zero.
std::unique_ptr<CoefficientProvider> make_context_free_provider(int param_dim, int feature_dim);

// Recognition network emitting all P * (K*D) coefficients per context point.
// Output row layout: entry for (parameter i, feature d) at index i * KD + d.
std::unique_ptr<CoefficientProvider> make_amortized_provider(int context_dim, int param_dim,
                                                             int feature_dim,
                                                             const std::vector<int>& hidden_sizes,
                                                             std::uint64_t seed);

std::unique_ptr<CoefficientProvider> make_amortized_provider(RecognitionNet net, int param_dim,
                                                             int feature_dim);

// Ridge-regularized sample estimate of the variance-minimizing coefficients
// for one fixed datum: row i of the result solves
//   (Cov[w] + ridge I) c_i = Cov[w, g_i]
// over R paired samples of the gradient (R x P) and basis features (R x KD).
Eigen::MatrixXd empirical_optimal_coefficient(const Eigen::MatrixXd& grad_samples,
                                              const Eigen::MatrixXd& basis_samples,
                                              double ridge = 1e-8);

}  // namespace acv
