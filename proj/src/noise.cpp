#include "acv/noise.hpp"

#include <stdexcept>

#include "acv/rng.hpp"

namespace acv {

NoiseDraw sample_noise(std::uint64_t seed, int batch_size, int samples, int dim) {
    if (batch_size < 1 || samples < 1 || dim < 1)
        throw std::invalid_argument("sample_noise: batch_size, samples and dim must all be >= 1");

    NoiseDraw draw;
    draw.batch_size = batch_size;
    draw.samples = samples;
    draw.dim = dim;
    draw.seed = seed;
    draw.eps.resize(batch_size * samples, dim);
    for (int b = 0; b < batch_size; ++b) {
        rng::Stream stream(rng::derive(seed, static_cast<std::uint64_t>(b)));
        for (int s = 0; s < samples; ++s)
            for (int d = 0; d < dim; ++d) draw.eps(b * samples + s, d) = stream.normal();
    }
    return draw;
}

BasisEval eval_basis(const NoiseDraw& noise, int order) {
    if (order < 1 || order > 3)
        throw std::invalid_argument("eval_basis: unsupported order, expected K in {1, 2, 3}");

    BasisEval basis;
    basis.order = order;
    basis.batch_size = noise.batch_size;
    basis.samples = noise.samples;
    basis.dim = noise.dim;
    const int d = noise.dim;
    basis.w.resize(noise.eps.rows(), order * d);
    basis.w.leftCols(d) = noise.eps;
    if (order >= 2) basis.w.middleCols(d, d) = noise.eps.array().square() - 1.0;
    if (order >= 3) basis.w.middleCols(2 * d, d) = noise.eps.array().cube();
    return basis;
}

Eigen::MatrixXd reparameterize(const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& chol_lower,
                               const NoiseDraw& noise) {
    const auto d = mu.size();
    if (chol_lower.rows() != d || chol_lower.cols() != d || noise.dim != d)
        throw std::invalid_argument("reparameterize: inconsistent dimensions");
    if ((chol_lower.diagonal().array() <= 0.0).any())
        throw std::invalid_argument("reparameterize: invalid Cholesky factor, diagonal must be strictly positive");

    Eigen::MatrixXd out = noise.eps * chol_lower.transpose();
    out.rowwise() += mu.transpose();
    return out;
}

}  // namespace acv
