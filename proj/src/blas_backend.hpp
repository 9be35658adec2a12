#pragma once

namespace han::detail {

using DgemmFn = void (*)(int order, int trans_a, int trans_b, int m, int n, int k,
                         double alpha, const double* a, int lda, const double* b,
                         int ldb, double beta, double* c, int ldc);

// Fortran LAPACK symmetric eigensolver (column-major), optional.
using DsyevFn = void (*)(const char* jobz, const char* uplo, const int* n, double* a,
                         const int* lda, double* w, double* work, const int* lwork,
                         int* info);

struct BlasBackend {
    DgemmFn dgemm = nullptr;   // null => use the built-in kernel
    DsyevFn dsyev = nullptr;   // null => use the built-in Jacobi solver
    const char* name = "builtin";
};

/// Resolve the process-wide backend (first call loads it; thread-safe).
const BlasBackend& blas();

} // namespace han::detail
