#include "han/init.hpp"

#include "han/error.hpp"

#include <cmath>
#include <string>

namespace han {

DenseMatrix kaiming_init(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) {
        fail(ErrorCode::InvalidArgument, "kaiming_init: zero fan (fan_in=" +
                                             std::to_string(fan_in) + ", fan_out=" +
                                             std::to_string(fan_out) + ")");
    }
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    DenseMatrix W(fan_out, fan_in);
    for (double& v : W.data) v = rng.normal() * std_dev;
    return W;
}

namespace {

DenseMatrix transpose(const DenseMatrix& A) {
    DenseMatrix T(A.cols, A.rows);
    for (std::size_t j = 0; j < A.cols; ++j)
        for (std::size_t i = 0; i < A.rows; ++i) T(j, i) = A(i, j);
    return T;
}

} // namespace

DenseMatrix orthogonal_init(Rng& rng, std::size_t n, std::size_t m) {
    if (n == 0 || m == 0) {
        fail(ErrorCode::InvalidArgument, "orthogonal_init: zero dimension");
    }
    if (n < m) return transpose(orthogonal_init(rng, m, n));

    DenseMatrix A(n, m);
    for (double& v : A.data) v = rng.normal();

    // Householder QR; reflectors kept to accumulate Q afterwards.
    std::vector<std::vector<double>> reflectors(m);
    std::vector<double> rdiag(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double sigma = 0.0;
        for (std::size_t i = k; i < n; ++i) sigma += A(i, k) * A(i, k);
        sigma = std::sqrt(sigma);

        std::vector<double> v(n - k, 0.0);
        for (std::size_t i = k; i < n; ++i) v[i - k] = A(i, k);
        if (sigma == 0.0) {
            v[0] = 1.0;
        } else {
            v[0] += (A(k, k) >= 0.0 ? sigma : -sigma);
        }
        double vnorm = 0.0;
        for (double x : v) vnorm += x * x;
        vnorm = std::sqrt(vnorm);
        for (double& x : v) x /= vnorm;

        for (std::size_t j = k; j < m; ++j) {
            double proj = 0.0;
            for (std::size_t i = k; i < n; ++i) proj += v[i - k] * A(i, j);
            proj *= 2.0;
            for (std::size_t i = k; i < n; ++i) A(i, j) -= proj * v[i - k];
        }
        rdiag[k] = A(k, k);
        reflectors[k] = std::move(v);
    }

    // Q = H_0 ... H_{m-1} applied to the leading columns of the identity.
    DenseMatrix Q(n, m);
    for (std::size_t j = 0; j < m; ++j) Q(j, j) = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const auto& v = reflectors[k];
        for (std::size_t j = 0; j < m; ++j) {
            double proj = 0.0;
            for (std::size_t i = k; i < n; ++i) proj += v[i - k] * Q(i, j);
            proj *= 2.0;
            for (std::size_t i = k; i < n; ++i) Q(i, j) -= proj * v[i - k];
        }
    }

    // Fix signs so diag(R) > 0; makes the factorisation (and the init) unique.
    for (std::size_t j = 0; j < m; ++j) {
        if (rdiag[j] < 0.0) {
            for (std::size_t i = 0; i < n; ++i) Q(i, j) = -Q(i, j);
        }
    }
    return Q;
}

DenseVector unit_vector_init(Rng& rng, std::size_t n) {
    if (n == 0) fail(ErrorCode::InvalidArgument, "unit_vector_init: zero length");
    DenseVector u(n);
    double norm = 0.0;
    do {
        for (double& v : u.data) v = rng.normal();
        norm = norm2(u);
    } while (norm < 1e-150);
    for (double& v : u.data) v /= norm;
    return u;
}

} // namespace han
