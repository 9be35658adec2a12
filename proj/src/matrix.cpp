#include "han/matrix.hpp"

#include "blas_backend.hpp"
#include "han/error.hpp"

#include <cmath>
#include <string>

namespace han {

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix I(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
    return I;
}

bool DenseMatrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool DenseVector::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

DenseVector matvec(const DenseMatrix& A, const DenseVector& x) {
    if (A.cols != x.size()) {
        fail(ErrorCode::DimensionMismatch,
             "matvec: matrix is " + std::to_string(A.rows) + "x" + std::to_string(A.cols) +
                 " but vector has length " + std::to_string(x.size()));
    }
    DenseVector y(A.rows, 0.0);
    // Fixed accumulation order: columns outer, rows inner.
    for (std::size_t j = 0; j < A.cols; ++j) {
        const double xj = x[j];
        const double* col = A.data.data() + j * A.rows;
        for (std::size_t i = 0; i < A.rows; ++i) y[i] += col[i] * xj;
    }
    return y;
}

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimensionMismatch,
             "dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const DenseVector& v) { return std::sqrt(dot(v, v)); }

namespace {

// Reference kernel, used when no BLAS library could be loaded.
void gemm_builtin(bool trans_a, bool trans_b, double alpha, const DenseMatrix& A,
                  const DenseMatrix& B, double beta, DenseMatrix& C) {
    const std::size_t m = C.rows, n = C.cols;
    const std::size_t k = trans_a ? A.rows : A.cols;
    for (double& v : C.data) v *= beta;
    auto a_at = [&](std::size_t i, std::size_t p) { return trans_a ? A(p, i) : A(i, p); };
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) {
            const double bv = alpha * (trans_b ? B(j, p) : B(p, j));
            if (bv == 0.0) continue;
            for (std::size_t i = 0; i < m; ++i) C(i, j) += a_at(i, p) * bv;
        }
    }
}

} // namespace

void gemm(bool trans_a, bool trans_b, double alpha, const DenseMatrix& A,
          const DenseMatrix& B, double beta, DenseMatrix& C) {
    const std::size_t m = trans_a ? A.cols : A.rows;
    const std::size_t k = trans_a ? A.rows : A.cols;
    const std::size_t kb = trans_b ? B.cols : B.rows;
    const std::size_t n = trans_b ? B.rows : B.cols;
    if (k != kb || C.rows != m || C.cols != n) {
        fail(ErrorCode::DimensionMismatch,
             "gemm: op(A) is " + std::to_string(m) + "x" + std::to_string(k) + ", op(B) is " +
                 std::to_string(kb) + "x" + std::to_string(n) + ", C is " +
                 std::to_string(C.rows) + "x" + std::to_string(C.cols));
    }
    if (m == 0 || n == 0) return;
    const auto& backend = detail::blas();
    if (backend.dgemm) {
        constexpr int kColMajor = 102, kNoTrans = 111, kTrans = 112;
        backend.dgemm(kColMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans,
                      static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha,
                      A.data.data(), static_cast<int>(A.rows), B.data.data(),
                      static_cast<int>(B.rows), beta, C.data.data(), static_cast<int>(C.rows));
    } else {
        gemm_builtin(trans_a, trans_b, alpha, A, B, beta, C);
    }
}

const char* blas_backend_name() { return detail::blas().name; }

} // namespace han
