#include "han/error.hpp"
#include "han/matrix.hpp"
#include "han/rng.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace han;

TEST_SUITE_BEGIN("matrix");

TEST_CASE("matvec identity") {
    DenseMatrix I = DenseMatrix::identity(3);
    DenseVector x{1.0, 2.0, 3.0};
    DenseVector y = matvec(I, x);
    CHECK(y.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("matvec 2x2 against a hand evaluation") {
    DenseMatrix A(2, 2);
    A(0, 0) = 0.0;
    A(0, 1) = -1.0;
    A(1, 0) = -1.0;
    A(1, 1) = 0.0;
    DenseVector y = matvec(A, DenseVector{1.0, 0.0});
    CHECK(y[0] == 0.0);
    CHECK(y[1] == -1.0);
}

TEST_CASE("matvec zero matrix") {
    DenseMatrix Z(2, 3, 0.0);
    DenseVector y = matvec(Z, DenseVector{5.0, 5.0, 5.0});
    CHECK(y.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("matvec dimension mismatch names both shapes") {
    DenseMatrix A(2, 3, 1.0);
    DenseVector x(4, 1.0);
    try {
        matvec(A, x);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
        CHECK(std::string(e.what()).find("2x3") != std::string::npos);
        CHECK(std::string(e.what()).find('4') != std::string::npos);
    }
}

TEST_CASE("matvec distributes over vector addition") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = 1 + rng.uniform_index(16), n = 1 + rng.uniform_index(16);
        DenseMatrix A(m, n);
        for (double& v : A.data) v = 2.0 * rng.uniform() - 1.0;
        DenseVector x(n), y(n), sum(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 2.0 * rng.uniform() - 1.0;
            y[i] = 2.0 * rng.uniform() - 1.0;
            sum[i] = x[i] + y[i];
        }
        DenseVector lhs = matvec(A, sum);
        DenseVector ax = matvec(A, x), ay = matvec(A, y);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(std::abs(lhs[i] - (ax[i] + ay[i])) <= 1e-12);
        }
    }
}

TEST_CASE("matvec is deterministic run to run") {
    Rng rng(11);
    DenseMatrix A(33, 17);
    for (double& v : A.data) v = rng.normal();
    DenseVector x(17);
    for (double& v : x.data) v = rng.normal();
    DenseVector y1 = matvec(A, x), y2 = matvec(A, x);
    CHECK(y1.data == y2.data);
}

TEST_CASE("gemm agrees with the reference triple loop") {
    Rng rng(13);
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            const std::size_t m = 5, k = 7, n = 4;
            DenseMatrix A = ta ? DenseMatrix(k, m) : DenseMatrix(m, k);
            DenseMatrix B = tb ? DenseMatrix(n, k) : DenseMatrix(k, n);
            for (double& v : A.data) v = rng.normal();
            for (double& v : B.data) v = rng.normal();
            DenseMatrix C(m, n, 0.0);
            gemm(ta, tb, 1.0, A, B, 0.0, C);
            DenseMatrix R = oracle::ref_matmul(ta, tb, A, B);
            for (std::size_t i = 0; i < C.size(); ++i) {
                CHECK(C.data[i] == doctest::Approx(R.data[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("gemm accumulates with beta") {
    DenseMatrix A(2, 2, 1.0), B(2, 2, 1.0), C(2, 2, 3.0);
    gemm(false, false, 1.0, A, B, 2.0, C);
    for (double v : C.data) CHECK(v == doctest::Approx(8.0)); // 2*3 + 2
}

TEST_CASE("gemm rejects mismatched shapes") {
    DenseMatrix A(2, 3), B(4, 2), C(2, 2);
    CHECK_THROWS_AS(gemm(false, false, 1.0, A, B, 0.0, C), Error);
}

TEST_CASE("init produces finite values") {
    Rng rng(17);
    DenseMatrix A(8, 8);
    for (double& v : A.data) v = rng.normal();
    CHECK(A.all_finite());
    A(3, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(A.all_finite());
}

TEST_SUITE_END();
