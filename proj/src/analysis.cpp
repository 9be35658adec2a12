#include "han/analysis.hpp"

#include "blas_backend.hpp"
#include "han/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <limits>

namespace han {

namespace {

bool is_hidden(const LayerSpec& s) { return s.act != Activation::Identity; }

// Scale column j of M by d[j].
void scale_columns(DenseMatrix& M, const DenseVector& d) {
    for (std::size_t j = 0; j < M.cols; ++j) {
        double* col = M.data.data() + j * M.rows;
        for (std::size_t i = 0; i < M.rows; ++i) col[i] *= d[j];
    }
}

} // namespace

DenseMatrix g_matrix(const NetworkModel& model, const DenseVector& x) {
    const auto& spec = model.spec();
    std::size_t width = 0;
    for (const auto& s : spec) {
        if (!is_hidden(s)) continue;
        if (s.in_width != s.out_width) {
            fail(ErrorCode::DimensionMismatch,
                 "g_matrix: hidden layer is not square (" + std::to_string(s.in_width) + "->" +
                     std::to_string(s.out_width) + ")");
        }
        if (width == 0) width = s.out_width;
        if (s.out_width != width) {
            fail(ErrorCode::DimensionMismatch, "g_matrix: hidden widths are not uniform");
        }
    }
    if (width == 0) fail(ErrorCode::InvalidArgument, "g_matrix: model has no hidden layers");
    if (x.size() != model.input_dim()) {
        fail(ErrorCode::DimensionMismatch, "g_matrix: input length mismatch");
    }
    if (model.input_dim() != width) {
        fail(ErrorCode::DimensionMismatch,
             "g_matrix: input dimension differs from the hidden width");
    }

    auto [y, tapes] = model.forward(x);
    (void)y;

    DenseMatrix G = DenseMatrix::identity(width);
    DenseMatrix tmp(width, width);
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        const auto& s = spec[k];
        if (!is_hidden(s)) continue;
        // Right-multiply G by W_k^T, then by the diagonal of activation
        // derivatives at this layer's pre-activation.
        if (const auto* fc = std::get_if<FcLayer>(&model.layers()[k])) {
            gemm(false, true, 1.0, G, fc->W, 0.0, tmp);
            std::swap(G, tmp);
        } else {
            const auto& hl = std::get<HanLayer>(model.layers()[k]);
            double snorm = 0.0;
            for (double v : hl.u.data) snorm += v * v;
            // G H = G - (2/s) (G u) u^T; H is symmetric.
            DenseVector gu(width, 0.0);
            for (std::size_t j = 0; j < width; ++j) {
                const double uj = hl.u[j];
                if (uj == 0.0) continue;
                const double* col = G.data.data() + j * width;
                for (std::size_t i = 0; i < width; ++i) gu[i] += col[i] * uj;
            }
            const double coef = 2.0 / snorm;
            for (std::size_t j = 0; j < width; ++j) {
                double* col = G.data.data() + j * width;
                const double uj = coef * hl.u[j];
                for (std::size_t i = 0; i < width; ++i) col[i] -= gu[i] * uj;
            }
        }
        DenseVector d(width);
        for (std::size_t i = 0; i < width; ++i)
            d[i] = activation_derivative(s.act, tapes[k].pre_activation[i]);
        scale_columns(G, d);
    }
    return G;
}

// ---------------------------------------------------------------------------
// Symmetric eigen extremes: LAPACK dsyev when available, else cyclic Jacobi.

namespace {

std::pair<double, double> jacobi_eig_extremes(DenseMatrix S) {
    const std::size_t n = S.rows;
    if (n == 1) return {S(0, 0), S(0, 0)};
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) off += S(i, j) * S(i, j);
    double scale = 0.0;
    for (double v : S.data) scale = std::max(scale, std::abs(v));
    const double tol = 1e-30 * std::max(1.0, scale * scale);
    for (int sweep = 0; sweep < 64 && off > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = S(p, q);
                if (apq == 0.0) continue;
                const double app = S(p, p), aqq = S(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double sip = S(i, p), siq = S(i, q);
                    S(i, p) = c * sip - s * siq;
                    S(i, q) = s * sip + c * siq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double spi = S(p, i), sqi = S(q, i);
                    S(p, i) = c * spi - s * sqi;
                    S(q, i) = s * spi + c * sqi;
                }
            }
        }
        off = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                if (i != j) off += S(i, j) * S(i, j);
    }
    double lo = S(0, 0), hi = S(0, 0);
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, S(i, i));
        hi = std::max(hi, S(i, i));
    }
    return {lo, hi};
}

} // namespace

std::pair<double, double> symmetric_eig_extremes(const DenseMatrix& S) {
    if (S.rows != S.cols || S.rows == 0) {
        fail(ErrorCode::DimensionMismatch, "symmetric_eig_extremes: matrix must be square");
    }
    const auto& backend = detail::blas();
    if (backend.dsyev) {
        DenseMatrix A = S;
        const int n = static_cast<int>(S.rows);
        std::vector<double> w(S.rows);
        int info = 0;
        int lwork = -1;
        double work_query = 0.0;
        backend.dsyev("N", "U", &n, A.data.data(), &n, w.data(), &work_query, &lwork, &info);
        if (info == 0) {
            lwork = static_cast<int>(work_query);
            std::vector<double> work(static_cast<std::size_t>(lwork));
            backend.dsyev("N", "U", &n, A.data.data(), &n, w.data(), work.data(), &lwork, &info);
        }
        if (info == 0) return {w.front(), w.back()};
        // fall through to Jacobi on LAPACK failure
    }
    return jacobi_eig_extremes(S);
}

GMatrixReport orthogonality_certificate(const NetworkModel& model, std::size_t trials, Rng& rng) {
    if (trials == 0) fail(ErrorCode::InvalidArgument, "certificate: trials must be >= 1");
    std::size_t hidden = 0;
    for (std::size_t k = 0; k < model.spec().size(); ++k) {
        const auto& s = model.spec()[k];
        if (!is_hidden(s)) continue;
        ++hidden;
        if (s.kind != LayerKind::Han) {
            fail(ErrorCode::Unsupported,
                 "certificate not applicable: hidden layer " + std::to_string(k) +
                     " is fully connected, not Householder");
        }
    }
    if (hidden == 0) fail(ErrorCode::InvalidArgument, "certificate: model has no hidden layers");

    GMatrixReport report;
    report.depth = hidden;
    report.sigma_min = std::numeric_limits<double>::infinity();
    report.sigma_max = 0.0;
    const std::size_t n = model.input_dim();
    DenseMatrix gtg(n, n);
    for (std::size_t t = 0; t < trials; ++t) {
        DenseVector x(n);
        for (double& v : x.data) v = rng.normal();
        DenseMatrix G = g_matrix(model, x);
        gemm(true, false, 1.0, G, G, 0.0, gtg);
        double defect = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                const double target = (i == j) ? 1.0 : 0.0;
                defect = std::max(defect, std::abs(gtg(i, j) - target));
            }
        }
        report.orspan = std::max(report.orspan, defect);
        auto [lo, hi] = symmetric_eig_extremes(gtg);
        report.sigma_min = std::min(report.sigma_min, std::sqrt(std::max(0.0, lo)));
        report.sigma_max = std::max(report.sigma_max, std::sqrt(std::max(0.0, hi)));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Variability.

namespace {

// Lattice of f over [-1,1]^2 extended by two steps on every side;
// F(i,j) = f(-1 + (i-2) h, -1 + (j-2) h) for i,j in [0, G+4).
double stencil_sum_from_lattice(const DenseMatrix& F, std::size_t grid, double h) {
    const double denom = 2.0 * h * h * h;
    double total = 0.0;
    for (std::size_t j = 2; j < grid + 2; ++j) {
        for (std::size_t i = 2; i < grid + 2; ++i) {
            const double d1 = (F(i + 2, j) - 2.0 * F(i + 1, j) + 2.0 * F(i - 1, j) -
                               F(i - 2, j)) / denom;
            const double d2 = (F(i, j + 2) - 2.0 * F(i, j + 1) + 2.0 * F(i, j - 1) -
                               F(i, j - 2)) / denom;
            total += d1 * d1 + d2 * d2;
        }
    }
    return total * h * h;
}

double reduce_field(ScalarField field, const double* col, std::size_t rows) {
    switch (field) {
    case ScalarField::FirstOutput: return col[0];
    case ScalarField::SumOutputs: {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += col[i];
        return s;
    }
    case ScalarField::MeanOutputs:
    default: {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += col[i];
        return s / static_cast<double>(rows);
    }
    }
}

// Field values of a model on the extended lattice, evaluated in one batch.
DenseMatrix model_lattice(const NetworkModel& model, std::size_t grid, double h,
                          ScalarField field) {
    const std::size_t ext = grid + 4;
    DenseMatrix points(2, ext * ext);
    for (std::size_t j = 0; j < ext; ++j) {
        const double x2 = -1.0 + (static_cast<double>(j) - 2.0) * h;
        for (std::size_t i = 0; i < ext; ++i) {
            const double x1 = -1.0 + (static_cast<double>(i) - 2.0) * h;
            points(0, j * ext + i) = x1;
            points(1, j * ext + i) = x2;
        }
    }
    DenseMatrix Y = model.predict(points, 4096);
    DenseMatrix F(ext, ext);
    for (std::size_t p = 0; p < ext * ext; ++p) {
        F.data[p] = reduce_field(field, Y.data.data() + p * Y.rows, Y.rows);
    }
    return F;
}

} // namespace

double third_derivative_sum(const std::function<double(double, double)>& f,
                            std::size_t grid_size) {
    if (grid_size < 5) fail(ErrorCode::InvalidArgument, "third_derivative_sum: grid must be >= 5");
    const double h = 2.0 / static_cast<double>(grid_size - 1);
    const std::size_t ext = grid_size + 4;
    DenseMatrix F(ext, ext);
    for (std::size_t j = 0; j < ext; ++j) {
        const double x2 = -1.0 + (static_cast<double>(j) - 2.0) * h;
        for (std::size_t i = 0; i < ext; ++i) {
            const double x1 = -1.0 + (static_cast<double>(i) - 2.0) * h;
            F(i, j) = f(x1, x2);
        }
    }
    return stencil_sum_from_lattice(F, grid_size, h);
}

VariabilityEstimate variability(const std::function<NetworkModel(Rng&)>& model_factory,
                                std::size_t samples, std::size_t grid_size, Rng& rng,
                                ScalarField field) {
    if (samples == 0) fail(ErrorCode::InvalidArgument, "variability: samples must be >= 1");
    if (grid_size < 5) fail(ErrorCode::InvalidArgument, "variability: grid must be >= 5");
    const double h = 2.0 / static_cast<double>(grid_size - 1);

    VariabilityEstimate est;
    est.sample_count = samples;
    est.grid_size = grid_size;
    est.step = h;
    est.per_sample.reserve(samples);

    double log_sum = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        NetworkModel model = model_factory(rng);
        if (model.input_dim() != 2) {
            fail(ErrorCode::InvalidArgument, "variability: model input dimension must be 2");
        }
        DenseMatrix F = model_lattice(model, grid_size, h, field);
        const double numerator = stencil_sum_from_lattice(F, grid_size, h);
        double mean_sq = 0.0;
        for (std::size_t j = 2; j < grid_size + 2; ++j)
            for (std::size_t i = 2; i < grid_size + 2; ++i) mean_sq += F(i, j) * F(i, j);
        mean_sq /= static_cast<double>(grid_size * grid_size);
        const double v = numerator / std::max(mean_sq, kVariabilityFloor);
        est.per_sample.push_back(v);
        log_sum += std::log(std::max(v, kVariabilityFloor));
    }
    est.geometric_mean = std::exp(log_sum / static_cast<double>(samples));
    std::sort(est.per_sample.begin(), est.per_sample.end());
    return est;
}

DenseMatrix landscape_grid(const NetworkModel& model, std::size_t grid_size, ScalarField field) {
    if (grid_size < 2) fail(ErrorCode::InvalidArgument, "landscape_grid: grid must be >= 2");
    if (model.input_dim() != 2) {
        fail(ErrorCode::InvalidArgument, "landscape_grid: model input dimension must be 2");
    }
    const double h = 2.0 / static_cast<double>(grid_size - 1);
    DenseMatrix points(2, grid_size * grid_size);
    for (std::size_t j = 0; j < grid_size; ++j) {
        const double x2 = -1.0 + static_cast<double>(j) * h;
        for (std::size_t i = 0; i < grid_size; ++i) {
            points(0, j * grid_size + i) = -1.0 + static_cast<double>(i) * h;
            points(1, j * grid_size + i) = x2;
        }
    }
    DenseMatrix Y = model.predict(points, 4096);
    DenseMatrix F(grid_size, grid_size);
    for (std::size_t p = 0; p < grid_size * grid_size; ++p) {
        F.data[p] = reduce_field(field, Y.data.data() + p * Y.rows, Y.rows);
    }
    return F;
}

} // namespace han
