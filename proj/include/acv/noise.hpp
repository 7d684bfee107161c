#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace acv {

// Standard-normal base randomness for a mini-batch: one D-dimensional draw
// per (batch element, Monte Carlo sample). Row r = b * samples + s holds
// epsilon for batch element b, sample s. Draws for each batch element come
// from an independently derived substream, so identical (seed, shape) gives
// a bit-identical tensor no matter how it is consumed.
struct NoiseDraw {
    Eigen::MatrixXd eps;  // (batch_size * samples) x dim
    int batch_size = 0;
    int samples = 0;  // S
    int dim = 0;      // D
    std::uint64_t seed = 0;
    std::vector<int> batch_indices;  // optional dataset indices, may be empty

    Eigen::MatrixXd::ConstRowXpr at(int b, int s) const {
        return eps.row(b * samples + s);
    }
};

// Centered polynomial features of the noise with exact zero mean under
// N(0, I): column blocks [eps, eps^2 - 1, eps^3][..order], each of width dim.
struct BasisEval {
    Eigen::MatrixXd w;  // (batch_size * samples) x (order * dim)
    int order = 1;      // K in {1, 2, 3}
    int batch_size = 0;
    int samples = 0;
    int dim = 0;

    int feature_dim() const { return order * dim; }
    Eigen::MatrixXd::ConstRowXpr at(int b, int s) const {
        return w.row(b * samples + s);
    }
};

NoiseDraw sample_noise(std::uint64_t seed, int batch_size, int samples, int dim);

BasisEval eval_basis(const NoiseDraw& noise, int order);

// mu + chol_lower * eps for every draw; result has NoiseDraw row layout.
Eigen::MatrixXd reparameterize(const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& chol_lower,
                               const NoiseDraw& noise);

}  // namespace acv
