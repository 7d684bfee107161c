#include "acv/coefficients.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "acv/rng.hpp"

namespace acv {

CoefficientBlock CoefficientBlock::zero(int batch, int param_dim, int feature_dim) {
    CoefficientBlock block;
    block.c.assign(batch, Eigen::MatrixXd::Zero(param_dim, feature_dim));
    return block;
}

bool CoefficientBlock::all_finite() const {
    for (const auto& m : c)
        if (!m.allFinite()) return false;
    return true;
}

// --- recognition network ---

RecognitionNet::RecognitionNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("RecognitionNet: need input and output sizes");
    for (int s : sizes_)
        if (s < 1) throw std::invalid_argument("RecognitionNet: layer sizes must be >= 1");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
        biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
}

RecognitionNet xavier_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    RecognitionNet net(layer_sizes);
    rng::Stream stream(seed);
    for (auto& w : net.weights_) {
        const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) = bound * (2.0 * stream.uniform() - 1.0);
    }
    net.revision_ = 1;
    return net;
}

int RecognitionNet::param_count() const {
    int n = 0;
    for (int l = 0; l < layer_count(); ++l)
        n += static_cast<int>(weights_[l].size() + biases_[l].size());
    return n;
}

Eigen::VectorXd RecognitionNet::params() const {
    Eigen::VectorXd flat(param_count());
    Eigen::Index at = 0;
    for (int l = 0; l < layer_count(); ++l) {
        const auto& w = weights_[l];
        // row-major weight order, then the bias
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) flat[at++] = w(i, j);
        flat.segment(at, biases_[l].size()) = biases_[l];
        at += biases_[l].size();
    }
    return flat;
}

void RecognitionNet::set_params(const Eigen::VectorXd& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("RecognitionNet::set_params: wrong parameter count");
    Eigen::Index at = 0;
    for (int l = 0; l < layer_count(); ++l) {
        auto& w = weights_[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = flat[at++];
        biases_[l] = flat.segment(at, biases_[l].size());
        at += biases_[l].size();
    }
    ++revision_;
}

Eigen::MatrixXd RecognitionNet::forward(const Eigen::MatrixXd& contexts, NetCache* cache) const {
    if (contexts.cols() != input_dim())
        throw std::invalid_argument("RecognitionNet::forward: context width does not match input layer");
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
        cache->revision = revision_;
        cache->batch = static_cast<int>(contexts.rows());
    }
    Eigen::MatrixXd act = contexts;
    for (int l = 0; l < layer_count(); ++l) {
        if (cache) cache->inputs.push_back(act);
        Eigen::MatrixXd pre = act * weights_[l].transpose();
        pre.rowwise() += biases_[l].transpose();
        if (cache) cache->preacts.push_back(pre);
        if (l + 1 < layer_count())
            act = pre.array().max(0.0);  // ReLU; subgradient at 0 taken as 0 in backward
        else
            act = std::move(pre);
    }
    return act;
}

Eigen::VectorXd RecognitionNet::backward(const NetCache& cache, const Eigen::MatrixXd& upstream) const {
    if (cache.revision != revision_)
        throw std::logic_error("RecognitionNet::backward: stale cache, parameters changed since forward");
    if (static_cast<int>(cache.inputs.size()) != layer_count())
        throw std::logic_error("RecognitionNet::backward: cache does not match network depth");
    if (upstream.rows() != cache.batch || upstream.cols() != output_dim())
        throw std::invalid_argument("RecognitionNet::backward: upstream shape mismatch");

    std::vector<Eigen::MatrixXd> d_weights(layer_count());
    std::vector<Eigen::VectorXd> d_biases(layer_count());
    Eigen::MatrixXd delta = upstream;  // d objective / d pre-activation of the last layer
    for (int l = layer_count() - 1; l >= 0; --l) {
        if (l < layer_count() - 1)
            delta = delta.array() * (cache.preacts[l].array() > 0.0).cast<double>();
        d_weights[l] = delta.transpose() * cache.inputs[l];
        d_biases[l] = delta.colwise().sum();
        if (l > 0) delta = (delta * weights_[l]).eval();
    }

    Eigen::VectorXd flat(param_count());
    Eigen::Index at = 0;
    for (int l = 0; l < layer_count(); ++l) {
        const auto& dw = d_weights[l];
        for (Eigen::Index i = 0; i < dw.rows(); ++i)
            for (Eigen::Index j = 0; j < dw.cols(); ++j) flat[at++] = dw(i, j);
        flat.segment(at, d_biases[l].size()) = d_biases[l];
        at += d_biases[l].size();
    }
    return flat;
}

void RecognitionNet::save(std::ostream& out) const {
    out << "acv-recognition-net 1\n";
    out << "sizes " << sizes_.size();
    for (int s : sizes_) out << ' ' << s;
    out << '\n';
    out.precision(std::numeric_limits<double>::max_digits10);
    for (int l = 0; l < layer_count(); ++l) {
        const auto& w = weights_[l];
        out << "layer " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) out << w(i, j) << '\n';
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out << biases_[l][i] << '\n';
    }
}

RecognitionNet RecognitionNet::load(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (!in || magic != "acv-recognition-net" || version != 1)
        throw std::runtime_error("RecognitionNet::load: not a recognition net checkpoint");
    std::string tag;
    std::size_t count = 0;
    in >> tag >> count;
    if (!in || tag != "sizes" || count < 2)
        throw std::runtime_error("RecognitionNet::load: bad size header");
    std::vector<int> sizes(count);
    for (auto& s : sizes) in >> s;
    RecognitionNet net(sizes);
    for (int l = 0; l < net.layer_count(); ++l) {
        int idx = 0;
        Eigen::Index rows = 0, cols = 0;
        in >> tag >> idx >> rows >> cols;
        if (!in || tag != "layer" || idx != l || rows != net.weights_[l].rows() ||
            cols != net.weights_[l].cols())
            throw std::runtime_error("RecognitionNet::load: bad layer header");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) in >> net.weights_[l](i, j);
        for (Eigen::Index i = 0; i < net.biases_[l].size(); ++i) in >> net.biases_[l][i];
    }
    if (!in) throw std::runtime_error("RecognitionNet::load: truncated checkpoint");
    net.revision_ = 1;
    return net;
}

// --- providers ---

namespace {

class NoneProvider final : public CoefficientProvider {
public:
    NoneProvider(int param_dim, int feature_dim) : p_(param_dim), kd_(feature_dim) {}
    std::string kind() const override { return "none"; }
    CoefficientBlock coefficients(const Eigen::MatrixXd& contexts) override {
        return CoefficientBlock::zero(static_cast<int>(contexts.rows()), p_, kd_);
    }
    int param_count() const override { return 0; }
    Eigen::VectorXd params() const override { return Eigen::VectorXd(); }
    void set_params(const Eigen::VectorXd& flat) override {
        if (flat.size() != 0) throw std::invalid_argument("NoneProvider has no parameters");
    }
    Eigen::VectorXd param_grad(const CoefficientBlock&) override { return Eigen::VectorXd(); }
    std::unique_ptr<CoefficientProvider> clone() const override {
        return std::make_unique<NoneProvider>(*this);
    }

private:
    int p_, kd_;
};

class ContextFreeProvider final : public CoefficientProvider {
public:
    ContextFreeProvider(int param_dim, int feature_dim)
        : c_(Eigen::MatrixXd::Zero(param_dim, feature_dim)) {}
    std::string kind() const override { return "context_free"; }
    CoefficientBlock coefficients(const Eigen::MatrixXd& contexts) override {
        CoefficientBlock block;
        block.c.assign(static_cast<std::size_t>(contexts.rows()), c_);
        return block;
    }
    int param_count() const override { return static_cast<int>(c_.size()); }
    Eigen::VectorXd params() const override {
        return Eigen::Map<const Eigen::VectorXd>(c_.data(), c_.size());
    }
    void set_params(const Eigen::VectorXd& flat) override {
        if (flat.size() != c_.size())
            throw std::invalid_argument("ContextFreeProvider::set_params: wrong size");
        c_ = Eigen::Map<const Eigen::MatrixXd>(flat.data(), c_.rows(), c_.cols());
    }
    Eigen::VectorXd param_grad(const CoefficientBlock& d_coeff) override {
        // per-entry batch sums via the same columnwise reduction the
        // recognition-net bias gradient uses, so a constant-in-context net
        // and this provider see bitwise-identical gradients
        Eigen::MatrixXd stacked(d_coeff.batch(), c_.size());
        for (int b = 0; b < d_coeff.batch(); ++b)
            stacked.row(b) =
                Eigen::Map<const Eigen::VectorXd>(d_coeff.c[b].data(), d_coeff.c[b].size())
                    .transpose();
        return stacked.colwise().sum().transpose();
    }
    std::unique_ptr<CoefficientProvider> clone() const override {
        return std::make_unique<ContextFreeProvider>(*this);
    }

private:
    Eigen::MatrixXd c_;  // column-major flattening is its own fixed convention
};

class AmortizedProvider final : public CoefficientProvider {
public:
    AmortizedProvider(RecognitionNet net, int param_dim, int feature_dim)
        : net_(std::move(net)), p_(param_dim), kd_(feature_dim) {
        if (net_.output_dim() != p_ * kd_)
            throw std::invalid_argument("AmortizedProvider: network output must be P * (K*D)");
    }
    std::string kind() const override { return "amortized"; }
    CoefficientBlock coefficients(const Eigen::MatrixXd& contexts) override {
        const Eigen::MatrixXd out = net_.forward(contexts, &cache_);
        CoefficientBlock block;
        block.c.resize(out.rows());
        for (Eigen::Index b = 0; b < out.rows(); ++b) {
            // row-major reshape: output index i * KD + d -> (parameter i, feature d)
            const Eigen::RowVectorXd row = out.row(b);
            block.c[b] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                        Eigen::RowMajor>>(row.data(), p_, kd_);
        }
        return block;
    }
    int param_count() const override { return net_.param_count(); }
    Eigen::VectorXd params() const override { return net_.params(); }
    void set_params(const Eigen::VectorXd& flat) override { net_.set_params(flat); }
    Eigen::VectorXd param_grad(const CoefficientBlock& d_coeff) override {
        Eigen::MatrixXd upstream(d_coeff.batch(), p_ * kd_);
        for (int b = 0; b < d_coeff.batch(); ++b)
            for (int i = 0; i < p_; ++i)
                for (int d = 0; d < kd_; ++d) upstream(b, i * kd_ + d) = d_coeff.c[b](i, d);
        return net_.backward(cache_, upstream);
    }
    std::unique_ptr<CoefficientProvider> clone() const override {
        return std::make_unique<AmortizedProvider>(*this);
    }
    const RecognitionNet& net() const { return net_; }

private:
    RecognitionNet net_;
    NetCache cache_;
    int p_, kd_;
};

}  // namespace

std::unique_ptr<CoefficientProvider> make_none_provider(int param_dim, int feature_dim) {
    return std::make_unique<NoneProvider>(param_dim, feature_dim);
}

std::unique_ptr<CoefficientProvider> make_context_free_provider(int param_dim, int feature_dim) {
    return std::make_unique<ContextFreeProvider>(param_dim, feature_dim);
}

std::unique_ptr<CoefficientProvider> make_amortized_provider(RecognitionNet net, int param_dim,
                                                             int feature_dim) {
    return std::make_unique<AmortizedProvider>(std::move(net), param_dim, feature_dim);
}

std::unique_ptr<CoefficientProvider> make_amortized_provider(int context_dim, int param_dim,
                                                             int feature_dim,
                                                             const std::vector<int>& hidden_sizes,
                                                             std::uint64_t seed) {
    std::vector<int> sizes;
    sizes.push_back(context_dim);
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(param_dim * feature_dim);
    return make_amortized_provider(xavier_init(sizes, seed), param_dim, feature_dim);
}

// --- empirical optimum ---

Eigen::MatrixXd empirical_optimal_coefficient(const Eigen::MatrixXd& grad_samples,
                                              const Eigen::MatrixXd& basis_samples,
                                              double ridge) {
    const Eigen::Index r = grad_samples.rows();
    if (r < 2) throw std::invalid_argument("empirical_optimal_coefficient: need at least 2 samples");
    if (basis_samples.rows() != r)
        throw std::invalid_argument("empirical_optimal_coefficient: sample count mismatch");

    const Eigen::RowVectorXd mean_w = basis_samples.colwise().mean();
    const Eigen::RowVectorXd mean_g = grad_samples.colwise().mean();
    const Eigen::MatrixXd wc = basis_samples.rowwise() - mean_w;
    const Eigen::MatrixXd gc = grad_samples.rowwise() - mean_g;

    const double denom = static_cast<double>(r - 1);
    Eigen::MatrixXd cov_ww = (wc.transpose() * wc) / denom;
    cov_ww.diagonal().array() += ridge;
    const Eigen::MatrixXd cov_wg = (wc.transpose() * gc) / denom;  // KD x P

    return cov_ww.ldlt().solve(cov_wg).transpose();  // P x KD
}

}  // namespace acv
