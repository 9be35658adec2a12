#include "han/data.hpp"

#include "han/error.hpp"
#include "han/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace han {

namespace {

// First k entries of a seeded uniform permutation of 0..n-1, both halves
// returned sorted ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
sample_split(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::size_t> train(perm.begin(), perm.begin() + k);
    std::vector<std::size_t> test(perm.begin() + k, perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

} // namespace

int checkerboard_label(double x1, double x2, std::size_t blocks) {
    auto block_index = [blocks](double t) -> std::size_t {
        const double scaled = (t + 1.0) / 2.0 * static_cast<double>(blocks);
        auto idx = static_cast<long long>(std::floor(scaled));
        if (idx < 0) idx = 0;
        if (idx >= static_cast<long long>(blocks)) idx = static_cast<long long>(blocks) - 1;
        return static_cast<std::size_t>(idx);
    };
    return static_cast<int>((block_index(x1) + block_index(x2)) % 2);
}

DatasetSplit checkerboard_generate(const CheckerboardSpec& spec) {
    if (spec.blocks == 0) fail(ErrorCode::InvalidArgument, "checkerboard: blocks must be >= 1");
    if (spec.grid_points < 2) {
        fail(ErrorCode::InvalidArgument, "checkerboard: grid_points must be >= 2");
    }
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "checkerboard: train_fraction must be in (0,1]");
    }
    if (!(spec.label_flip_fraction >= 0.0 && spec.label_flip_fraction < 1.0)) {
        fail(ErrorCode::InvalidArgument, "checkerboard: label_flip_fraction must be in [0,1)");
    }

    const std::size_t g = spec.grid_points;
    const std::size_t n = g * g;
    const double h = 2.0 / static_cast<double>(g - 1);

    std::vector<double> xs(n), ys(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < g; ++i) {
        const double x1 = -1.0 + static_cast<double>(i) * h;
        for (std::size_t j = 0; j < g; ++j) {
            const double x2 = -1.0 + static_cast<double>(j) * h;
            const std::size_t p = i * g + j;
            xs[p] = x1;
            ys[p] = x2;
            labels[p] = checkerboard_label(x1, x2, spec.blocks);
        }
    }

    Rng rng(spec.seed);
    const auto train_count = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(n)));
    auto [train_idx, test_idx] = sample_split(n, train_count, rng);

    DatasetSplit split;
    split.classification = true;
    split.norm.feature_mean = {0.0, 0.0};
    split.norm.feature_std = {1.0, 1.0};

    auto fill = [&](const std::vector<std::size_t>& idx, DenseMatrix& X, DenseMatrix& Y,
                    std::vector<int>& lab) {
        X = DenseMatrix(2, idx.size());
        Y = DenseMatrix(2, idx.size(), 0.0);
        lab.resize(idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const std::size_t p = idx[c];
            X(0, c) = xs[p];
            X(1, c) = ys[p];
            lab[c] = labels[p];
            Y(static_cast<std::size_t>(labels[p]), c) = 1.0;
        }
    };
    fill(train_idx, split.X_train, split.Y_train, split.labels_train);
    fill(test_idx, split.X_test, split.Y_test, split.labels_test);

    const auto flip_count = static_cast<std::size_t>(
        std::floor(spec.label_flip_fraction * static_cast<double>(train_count)));
    if (flip_count > 0) {
        auto [flip_pos, rest] = sample_split(train_count, flip_count, rng);
        (void)rest;
        for (std::size_t pos : flip_pos) {
            const int flipped = 1 - split.labels_train[pos];
            split.labels_train[pos] = flipped;
            split.Y_train(0, pos) = flipped == 0 ? 1.0 : 0.0;
            split.Y_train(1, pos) = flipped == 1 ? 1.0 : 0.0;
        }
    }
    return split;
}

// ---------------------------------------------------------------------------
// CSV ingestion.

RawTable load_regression_csv(const std::string& path, int target_column,
                             std::size_t expected_rows, std::size_t expected_dims) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t ncols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // skip blank lines
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            const char* field_end = p;
            while (field_end < end && *field_end != ',') ++field_end;
            const char* num_end = field_end;
            while (num_end > p && (num_end[-1] == ' ' || num_end[-1] == '\t')) --num_end;
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(p, num_end, value);
            if (ec != std::errc() || ptr != num_end || p == num_end) {
                fail(ErrorCode::ParseError,
                     path + ": line " + std::to_string(line_no) + ": expected a number, got '" +
                         std::string(p, field_end) + "'");
            }
            row.push_back(value);
            if (field_end == end) break;
            p = field_end + 1;
            if (p == end) {
                fail(ErrorCode::ParseError,
                     path + ": line " + std::to_string(line_no) + ": trailing comma");
            }
        }
        if (ncols == 0) {
            ncols = row.size();
            if (ncols < 2) {
                fail(ErrorCode::ParseError,
                     path + ": line " + std::to_string(line_no) +
                         ": need at least one feature and one target column");
            }
        } else if (row.size() != ncols) {
            fail(ErrorCode::ParseError, path + ": line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(ncols) + " columns, got " +
                                            std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail(ErrorCode::ParseError, path + ": no data rows");

    std::size_t target = (target_column < 0) ? ncols - 1 : static_cast<std::size_t>(target_column);
    if (target >= ncols) {
        fail(ErrorCode::InvalidArgument, path + ": target column " + std::to_string(target_column) +
                                             " out of range (have " + std::to_string(ncols) +
                                             " columns)");
    }
    const std::size_t dim = ncols - 1;
    if (expected_rows != 0 && rows.size() != expected_rows) {
        fail(ErrorCode::DimensionMismatch, path + ": expected " + std::to_string(expected_rows) +
                                               " rows, got " + std::to_string(rows.size()));
    }
    if (expected_dims != 0 && dim != expected_dims) {
        fail(ErrorCode::DimensionMismatch, path + ": expected " + std::to_string(expected_dims) +
                                               " feature columns, got " + std::to_string(dim));
    }

    RawTable table;
    table.features = DenseMatrix(dim, rows.size());
    table.target = DenseVector(rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        std::size_t f = 0;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (c == target) {
                table.target[s] = rows[s][c];
            } else {
                table.features(f++, s) = rows[s][c];
            }
        }
    }
    return table;
}

DatasetSplit split_and_normalize(const RawTable& table, double train_fraction,
                                 std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        fail(ErrorCode::InvalidArgument, "split: train_fraction must be in (0,1)");
    }
    const std::size_t n = table.target.size();
    const std::size_t dim = table.features.rows;
    if (n < 4) fail(ErrorCode::InvalidArgument, "split: need at least 4 samples");

    const auto k = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (k == 0 || k == n) fail(ErrorCode::InvalidArgument, "split: degenerate train fraction");
    Rng rng(seed);
    auto [train_idx, test_idx] = sample_split(n, k, rng);

    // training-split statistics only (population convention)
    std::vector<double> mean(dim, 0.0), stdv(dim, 0.0);
    for (std::size_t s : train_idx)
        for (std::size_t f = 0; f < dim; ++f) mean[f] += table.features(f, s);
    for (std::size_t f = 0; f < dim; ++f) mean[f] /= static_cast<double>(k);
    for (std::size_t s : train_idx) {
        for (std::size_t f = 0; f < dim; ++f) {
            const double d = table.features(f, s) - mean[f];
            stdv[f] += d * d;
        }
    }
    for (std::size_t f = 0; f < dim; ++f) stdv[f] = std::sqrt(stdv[f] / static_cast<double>(k));

    DatasetSplit split;
    std::vector<std::size_t> kept;
    for (std::size_t f = 0; f < dim; ++f) {
        if (stdv[f] > 0.0) {
            kept.push_back(f);
        } else {
            split.norm.dropped_features.push_back(f);
        }
    }
    if (kept.empty()) fail(ErrorCode::InvalidArgument, "split: every feature is constant");

    double tmean = 0.0, tstd = 0.0;
    double tmin = table.target[train_idx.front()], tmax = tmin;
    for (std::size_t s : train_idx) {
        tmean += table.target[s];
        tmin = std::min(tmin, table.target[s]);
        tmax = std::max(tmax, table.target[s]);
    }
    tmean /= static_cast<double>(k);
    for (std::size_t s : train_idx) {
        const double d = table.target[s] - tmean;
        tstd += d * d;
    }
    tstd = std::sqrt(tstd / static_cast<double>(k));
    if (tstd == 0.0) {
        fail(ErrorCode::InvalidArgument, "split: target is constant on the training split");
    }

    for (std::size_t f : kept) {
        split.norm.feature_mean.push_back(mean[f]);
        split.norm.feature_std.push_back(stdv[f]);
    }
    split.norm.target_mean = tmean;
    split.norm.target_std = tstd;
    split.norm.target_min = tmin;
    split.norm.target_max = tmax;

    auto fill = [&](const std::vector<std::size_t>& idx, DenseMatrix& X, DenseMatrix& Y) {
        X = DenseMatrix(kept.size(), idx.size());
        Y = DenseMatrix(1, idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const std::size_t s = idx[c];
            for (std::size_t f = 0; f < kept.size(); ++f) {
                X(f, c) = (table.features(kept[f], s) - split.norm.feature_mean[f]) /
                          split.norm.feature_std[f];
            }
            Y(0, c) = (table.target[s] - tmean) / tstd;
        }
    };
    fill(train_idx, split.X_train, split.Y_train);
    fill(test_idx, split.X_test, split.Y_test);
    return split;
}

double nrmse(const DenseVector& pred, const DenseVector& target, const NormStats& stats,
             NrmseNorm norm) {
    if (pred.size() != target.size()) {
        fail(ErrorCode::DimensionMismatch, "nrmse: length mismatch (" +
                                               std::to_string(pred.size()) + " vs " +
                                               std::to_string(target.size()) + ")");
    }
    if (pred.size() < 2) fail(ErrorCode::InvalidArgument, "nrmse: need at least 2 points");
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sq += d * d;
    }
    const double rmse = std::sqrt(sq / static_cast<double>(pred.size()));
    const double denom = (norm == NrmseNorm::Std) ? stats.target_std
                                                  : (stats.target_max - stats.target_min);
    if (!(denom > 0.0)) fail(ErrorCode::InvalidArgument, "nrmse: non-positive denominator");
    return rmse / denom;
}

std::vector<int> labels_from_onehot(const DenseMatrix& Y) {
    std::vector<int> labels(Y.cols);
    for (std::size_t j = 0; j < Y.cols; ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < Y.rows; ++i) {
            if (Y(i, j) > Y(arg, j)) arg = i;
        }
        labels[j] = static_cast<int>(arg);
    }
    return labels;
}

double accuracy(const DenseMatrix& pred_logits, const std::vector<int>& labels) {
    if (pred_logits.cols != labels.size()) {
        fail(ErrorCode::DimensionMismatch, "accuracy: prediction/label count mismatch");
    }
    if (labels.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < pred_logits.cols; ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < pred_logits.rows; ++i) {
            if (pred_logits(i, j) > pred_logits(arg, j)) arg = i;
        }
        if (static_cast<int>(arg) == labels[j]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

DenseVector denormalize_target(const DenseVector& y_normalized, const NormStats& stats) {
    DenseVector y(y_normalized.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = y_normalized[i] * stats.target_std + stats.target_mean;
    }
    return y;
}

void save_dataset(const DatasetSplit& split, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create directory '" + dir + "': " + ec.message());

    auto write_matrix_pair = [&](const std::string& name, const DenseMatrix& X,
                                 const DenseMatrix& Y) {
        std::ofstream out(dir + "/" + name);
        if (!out) fail(ErrorCode::IoError, "cannot write " + dir + "/" + name);
        out.precision(17);
        for (std::size_t j = 0; j < X.cols; ++j) {
            for (std::size_t i = 0; i < X.rows; ++i) out << X(i, j) << ',';
            for (std::size_t i = 0; i < Y.rows; ++i) {
                out << Y(i, j) << (i + 1 < Y.rows ? "," : "");
            }
            out << '\n';
        }
    };
    write_matrix_pair("train.csv", split.X_train, split.Y_train);
    write_matrix_pair("test.csv", split.X_test, split.Y_test);

    nlohmann::json stats;
    stats["feature_mean"] = split.norm.feature_mean;
    stats["feature_std"] = split.norm.feature_std;
    stats["target_mean"] = split.norm.target_mean;
    stats["target_std"] = split.norm.target_std;
    stats["target_min"] = split.norm.target_min;
    stats["target_max"] = split.norm.target_max;
    stats["dropped_features"] = split.norm.dropped_features;
    stats["classification"] = split.classification;
    stats["train_count"] = split.X_train.cols;
    stats["test_count"] = split.X_test.cols;
    std::ofstream out(dir + "/stats.json");
    if (!out) fail(ErrorCode::IoError, "cannot write " + dir + "/stats.json");
    out << stats.dump(2) << '\n';
}

} // namespace han
