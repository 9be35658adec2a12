#pragma once

#include "han/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace han {

/// Normalisation statistics gathered on the training split only.
struct NormStats {
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    double target_mean{0.0};
    double target_std{1.0};
    double target_min{0.0};
    double target_max{1.0};
    /// Source column indices dropped for being constant on the training split.
    std::vector<std::size_t> dropped_features;
};

/// Train/test matrices with samples as columns. Features and targets are
/// stored in normalised form; norm holds the statistics to invert them.
struct DatasetSplit {
    DenseMatrix X_train, Y_train;
    DenseMatrix X_test, Y_test;
    NormStats norm;
    bool classification{false};
    std::vector<int> labels_train;   // classification only
    std::vector<int> labels_test;
};

struct CheckerboardSpec {
    std::size_t blocks{12};
    std::size_t grid_points{81};
    double train_fraction{0.25};
    double label_flip_fraction{0.0};
    std::uint64_t seed{0};
};

/// Block-parity label of a point; the block index saturates at blocks-1 on
/// the +1 boundary.
int checkerboard_label(double x1, double x2, std::size_t blocks);

/// Uniform grid_points^2 mesh over [-1,1]^2, one-hot labels in R^2, a
/// seeded train/test split, and optional uniformly-chosen training-label
/// flips.
DatasetSplit checkerboard_generate(const CheckerboardSpec& spec);

struct RawTable {
    DenseMatrix features;   // dim x samples
    DenseVector target;
};

/// Headerless numeric CSV, one sample per row; target_column < 0 means the
/// last column. Non-zero expected_rows / expected_dims are validated.
RawTable load_regression_csv(const std::string& path, int target_column = -1,
                             std::size_t expected_rows = 0, std::size_t expected_dims = 0);

/// Seeded uniform split; features and target z-scored with training-split
/// statistics. Constant features on the training split are dropped (and
/// recorded in norm_stats).
DatasetSplit split_and_normalize(const RawTable& table, double train_fraction,
                                 std::uint64_t seed);

enum class NrmseNorm { Std, Range };

/// Root-mean-square error of pred vs target (both on the original target
/// scale) divided by the training-target statistic chosen by `norm`.
double nrmse(const DenseVector& pred, const DenseVector& target, const NormStats& stats,
             NrmseNorm norm = NrmseNorm::Std);

/// Argmax match rate; ties break toward the lowest class index.
double accuracy(const DenseMatrix& pred_logits, const std::vector<int>& labels);

std::vector<int> labels_from_onehot(const DenseMatrix& Y);

/// Original-scale values of a normalised target row vector.
DenseVector denormalize_target(const DenseVector& y_normalized, const NormStats& stats);

/// Persist a split for provenance: train.csv / test.csv (normalised values,
/// features then targets per row) plus stats.json.
void save_dataset(const DatasetSplit& split, const std::string& dir);

} // namespace han
