#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace han {

/// Column-major dense matrix of IEEE-754 doubles. The single numeric
/// carrier of the library; entry (i,j) lives at data[i + j*rows].
struct DenseMatrix {
    std::size_t rows{0};
    std::size_t cols{0};
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i + j * rows]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i + j * rows]; }

    std::size_t size() const { return data.size(); }

    static DenseMatrix identity(std::size_t n);

    bool all_finite() const;
};

struct DenseVector {
    std::vector<double> data;

    DenseVector() = default;
    explicit DenseVector(std::size_t n, double fill = 0.0) : data(n, fill) {}
    DenseVector(std::initializer_list<double> init) : data(init) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    auto begin() { return data.begin(); }
    auto end() { return data.end(); }
    auto begin() const { return data.begin(); }
    auto end() const { return data.end(); }

    bool all_finite() const;
};

/// y = A x with a fixed summation order (accumulation runs over columns,
/// then rows) so results are bit-reproducible run to run.
DenseVector matvec(const DenseMatrix& A, const DenseVector& x);

double dot(const DenseVector& a, const DenseVector& b);
double norm2(const DenseVector& v);

/// C = alpha * op(A) * op(B) + beta * C.
/// Dispatches to the runtime BLAS backend when one is loaded, otherwise a
/// built-in blocked kernel. Single-threaded either way.
void gemm(bool trans_a, bool trans_b, double alpha, const DenseMatrix& A,
          const DenseMatrix& B, double beta, DenseMatrix& C);

/// Name of the linear-algebra backend in use, e.g. "openblas(SkylakeX)".
const char* blas_backend_name();

} // namespace han
