#pragma once

#include "han/network.hpp"

#include <functional>

namespace han {

/// Numeric witness for the orthogonality of the layer-Jacobian product.
struct GMatrixReport {
    std::size_t depth{0};     // hidden layers entering the product
    double orspan{0.0};       // worst max-norm of GtG - I over the trials
    double sigma_min{0.0};
    double sigma_max{0.0};
};

/// Product over the hidden layers of W_k^T D_k, where D_k is the diagonal
/// of activation derivatives at layer k's pre-activation for input x and
/// W_k is the reflector matrix for Han layers. Hidden layers must share one
/// (square) width.
DenseMatrix g_matrix(const NetworkModel& model, const DenseVector& x);

/// Worst-case orthogonality defect and singular-value extremes of the
/// G-matrix over `trials` standard-normal inputs. The model's hidden layers
/// must all be Householder layers.
GMatrixReport orthogonality_certificate(const NetworkModel& model, std::size_t trials, Rng& rng);

/// Grid functional: sum over a G x G lattice on [-1,1]^2 of the squared
/// 5-point third-derivative stencil along both axes, times the cell area.
/// The stencil reaches two steps outside the square; f must be evaluable
/// there. Step h = 2/(grid_size-1).
double third_derivative_sum(const std::function<double(double, double)>& f,
                            std::size_t grid_size);

/// Scalar field reduced from the model output surface.
enum class ScalarField { MeanOutputs, SumOutputs, FirstOutput };

struct VariabilityEstimate {
    std::vector<double> per_sample;   // ascending
    double geometric_mean{0.0};
    std::size_t sample_count{0};
    std::size_t grid_size{0};
    double step{0.0};
};

/// Sample-mean variability over fresh parameter draws: per sample,
/// V = third-derivative functional of f divided by the grid mean of f^2
/// (floored at 1e-300); aggregated by geometric mean with the same floor.
/// model_factory must return a model with 2-dimensional input.
VariabilityEstimate variability(const std::function<NetworkModel(Rng&)>& model_factory,
                                std::size_t samples, std::size_t grid_size, Rng& rng,
                                ScalarField field = ScalarField::MeanOutputs);

/// G x G matrix of scalar-field values over [-1,1]^2; entry (i,j) is the
/// field at (x1_i, x2_j).
DenseMatrix landscape_grid(const NetworkModel& model, std::size_t grid_size,
                           ScalarField field = ScalarField::MeanOutputs);

/// Smallest/largest eigenvalues of a symmetric matrix (ascending pair).
/// LAPACK-backed when available, cyclic Jacobi otherwise.
std::pair<double, double> symmetric_eig_extremes(const DenseMatrix& S);

inline constexpr double kVariabilityFloor = 1e-300;

} // namespace han
