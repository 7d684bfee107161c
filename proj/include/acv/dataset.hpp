#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "acv/rng.hpp"

namespace acv {

// Tabular data with z-scored features. Standardization uses the population
// standard deviation, so standardized columns have mean 0 and std exactly 1;
// constant columns map to all zeros (their stored std stays 0, which makes
// destandardization the exact inverse).
struct Dataset {
    Eigen::MatrixXd features;  // N x D_x, standardized
    Eigen::VectorXd targets;   // N
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_std;  // raw population std, possibly 0
    std::vector<std::string> column_names;
    std::string target_name;

    int size() const { return static_cast<int>(targets.size()); }
    int feature_dim() const { return static_cast<int>(features.cols()); }
    Eigen::MatrixXd destandardized_features() const;
};

void standardize_features(Dataset& data);

struct CsvSchema {
    std::string target_column;  // empty: last column is the target
};

// Parses a numeric CSV with a header row. Malformed input fails with the
// 1-based row and column of the offending cell.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

struct SynthLogregResult {
    Dataset data;
    Eigen::VectorXd weights;  // generating weights, w.r.t. standardized features
};

// Gaussian feature clusters with per-cluster location and scale, labels
// drawn from a logistic model on the standardized features. Heterogeneous
// clusters make the per-datum gradient/noise relationship genuinely
// context-dependent. Generating weights are drawn from the seed unless
// overridden.
SynthLogregResult synth_logreg(std::uint64_t seed, int n, int dim, int cluster_count,
                               const Eigen::VectorXd* weight_override = nullptr);

// Uniform sample of `size` distinct indices from [0, n).
std::vector<int> sample_minibatch(rng::Stream& stream, int n, int size);

}  // namespace acv
