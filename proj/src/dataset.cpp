#include "acv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "acv/models.hpp"

namespace acv {

Eigen::MatrixXd Dataset::destandardized_features() const {
    Eigen::MatrixXd raw = features;
    for (int j = 0; j < raw.cols(); ++j)
        raw.col(j) = raw.col(j) * feature_std[j] + Eigen::VectorXd::Constant(raw.rows(), feature_mean[j]);
    return raw;
}

void standardize_features(Dataset& data) {
    const auto n = data.features.rows();
    data.feature_mean = data.features.colwise().mean();
    data.feature_std.resize(data.features.cols());
    for (int j = 0; j < data.features.cols(); ++j) {
        data.features.col(j).array() -= data.feature_mean[j];
        const double var = data.features.col(j).squaredNorm() / static_cast<double>(n);
        const double sd = std::sqrt(var);
        data.feature_std[j] = sd;
        if (sd > 1e-12)
            data.features.col(j) /= sd;
        else
            data.features.col(j).setZero();  // constant column
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trimmed(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& cell, int row, int col) {
    const std::string t = trimmed(cell);
    std::size_t consumed = 0;
    double value = 0.0;
    try {
        value = std::stod(t, &consumed);
    } catch (const std::exception&) {
        consumed = 0;
    }
    if (t.empty() || consumed != t.size()) {
        std::ostringstream msg;
        msg << "load_csv: non-numeric cell at row " << row << ", column " << col << ": '" << cell
            << "'";
        throw std::runtime_error(msg.str());
    }
    return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: missing header row in " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trimmed(h);
    const int cols = static_cast<int>(header.size());
    if (cols < 2) throw std::runtime_error("load_csv: need at least one feature and a target column");

    int target_col = cols - 1;
    if (!schema.target_column.empty()) {
        const auto it = std::find(header.begin(), header.end(), schema.target_column);
        if (it == header.end())
            throw std::runtime_error("load_csv: target column not found: " + schema.target_column);
        target_col = static_cast<int>(it - header.begin());
    }

    std::vector<std::vector<double>> rows;
    int row_number = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++row_number;
        if (trimmed(line).empty()) {
            std::ostringstream msg;
            msg << "load_csv: empty row " << row_number;
            throw std::runtime_error(msg.str());
        }
        const std::vector<std::string> cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != cols) {
            std::ostringstream msg;
            msg << "load_csv: row " << row_number << " has " << cells.size() << " cells, expected "
                << cols;
            throw std::runtime_error(msg.str());
        }
        std::vector<double> parsed(cols);
        for (int j = 0; j < cols; ++j) parsed[j] = parse_cell(cells[j], row_number, j + 1);
        rows.push_back(std::move(parsed));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

    Dataset data;
    data.features.resize(rows.size(), cols - 1);
    data.targets.resize(rows.size());
    data.target_name = header[target_col];
    for (int j = 0; j < cols; ++j)
        if (j != target_col) data.column_names.push_back(header[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        int k = 0;
        for (int j = 0; j < cols; ++j) {
            if (j == target_col)
                data.targets[i] = rows[i][j];
            else
                data.features(i, k++) = rows[i][j];
        }
    }
    standardize_features(data);
    return data;
}

SynthLogregResult synth_logreg(std::uint64_t seed, int n, int dim, int cluster_count,
                               const Eigen::VectorXd* weight_override) {
    if (n < cluster_count || cluster_count < 1)
        throw std::invalid_argument("synth_logreg: need n >= cluster_count >= 1");

    // Cluster centers sit at distinct radii along one shared direction, with
    // small cluster-specific Gaussian spread. Mini-batch gradients then share
    // a noise component a global control variate coefficient can remove,
    // while the per-datum couplings still vary with the context.
    rng::Stream setup(rng::derive(seed, 0));
    Eigen::VectorXd axis(dim);
    for (int j = 0; j < dim; ++j) axis[j] = setup.normal();
    axis.normalize();
    Eigen::MatrixXd centers(cluster_count, dim);
    Eigen::VectorXd scales(cluster_count);
    for (int c = 0; c < cluster_count; ++c) {
        const double t = cluster_count == 1 ? 0.5 : static_cast<double>(c) / (cluster_count - 1);
        centers.row(c) = (0.7 + 0.75 * t) * axis.transpose();
        scales[c] = 0.07 * (0.8 + 0.4 * setup.uniform());
    }
    Eigen::VectorXd weights(dim);
    for (int j = 0; j < dim; ++j) weights[j] = 0.3 * setup.normal();
    if (weight_override) {
        if (weight_override->size() != dim)
            throw std::invalid_argument("synth_logreg: weight override has wrong dimension");
        weights = *weight_override;
    }

    SynthLogregResult result;
    result.data.features.resize(n, dim);
    result.data.targets.resize(n);
    rng::Stream draw(rng::derive(seed, 1));
    for (int i = 0; i < n; ++i) {
        const int c = (cluster_count == 1) ? 0 : draw.uniform_int(cluster_count);
        for (int j = 0; j < dim; ++j)
            result.data.features(i, j) = centers(c, j) + scales[c] * draw.normal();
    }
    standardize_features(result.data);

    // Labels come from the standardized features, so the generating weights
    // live in the same space the model is fit in.
    for (int i = 0; i < n; ++i) {
        const double p = sigmoid(result.data.features.row(i).dot(weights));
        result.data.targets[i] = (draw.uniform() < p) ? 1.0 : 0.0;
    }
    for (int j = 0; j < dim; ++j) {
        std::ostringstream name;
        name << "x" << j;
        result.data.column_names.push_back(name.str());
    }
    result.data.target_name = "y";
    result.weights = weights;
    return result;
}

std::vector<int> sample_minibatch(rng::Stream& stream, int n, int size) {
    if (size < 1 || size > n)
        throw std::invalid_argument("sample_minibatch: need 1 <= size <= n");
    // partial Fisher-Yates over the index range
    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    for (int i = 0; i < size; ++i) {
        const int j = i + stream.uniform_int(n - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(size);
    return indices;
}

}  // namespace acv
