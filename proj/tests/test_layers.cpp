#include "han/error.hpp"
#include "han/init.hpp"
#include "han/layers.hpp"
#include "han/rng.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace han;

namespace {

DenseVector randn(Rng& rng, std::size_t n) {
    DenseVector v(n);
    for (double& x : v.data) x = rng.normal();
    return v;
}

} // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("householder reflects its own direction") {
    DenseVector y = householder_apply(DenseVector{1.0, 0.0}, DenseVector{1.0, 0.0});
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(0.0));
}

TEST_CASE("householder fixes the orthogonal complement") {
    DenseVector y = householder_apply(DenseVector{1.0, 0.0}, DenseVector{0.0, 7.0});
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(7.0));
}

TEST_CASE("householder hand example u=(1,1)") {
    // H = I - u u^T for ||u||^2 = 2; H (1,0) = (0,-1)
    DenseVector y = householder_apply(DenseVector{1.0, 1.0}, DenseVector{1.0, 0.0});
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(-1.0));
}

TEST_CASE("householder rejects a degenerate reflector") {
    DenseVector u(3, 0.0);
    try {
        householder_apply(u, DenseVector{1.0, 2.0, 3.0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateReflector);
    }
}

TEST_CASE("householder involution, norm preservation, scale invariance") {
    Rng rng(99);
    for (std::size_t n : {2ul, 5ul, 33ul, 512ul}) {
        DenseVector u = randn(rng, n);
        DenseVector x = randn(rng, n);
        DenseVector twice = householder_apply(u, householder_apply(u, x));
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(twice[i] - x[i]) <= 1e-12);
        CHECK(std::abs(norm2(householder_apply(u, x)) - norm2(x)) <= 1e-12);
        for (double alpha : {1e-6, -3.0, 1e6}) {
            DenseVector su(n);
            for (std::size_t i = 0; i < n; ++i) su[i] = alpha * u[i];
            DenseVector a = householder_apply(u, x), b = householder_apply(su, x);
            for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
        }
    }
}

TEST_CASE("han forward reflects, shifts and rectifies") {
    HanLayer layer;
    layer.u = DenseVector{1.0, 0.0};
    layer.b = DenseVector{0.0, 0.0};
    auto [y, tape] = han_forward(layer, DenseVector{-3.0, 4.0});
    CHECK(tape.pre_activation.data == std::vector<double>{3.0, 4.0});
    CHECK(y.data == std::vector<double>{3.0, 4.0});
    CHECK(tape.input.data == std::vector<double>{-3.0, 4.0});
    CHECK(tape.output.data == y.data);
}

TEST_CASE("han forward passes only the bias through zero input") {
    HanLayer layer;
    layer.u = DenseVector{1.0, 1.0};
    layer.b = DenseVector{1.0, 1.0};
    auto [y, tape] = han_forward(layer, DenseVector{0.0, 0.0});
    CHECK(tape.pre_activation.data == std::vector<double>{1.0, 1.0});
    CHECK(y.data == std::vector<double>{1.0, 1.0});
}

TEST_CASE("han forward preserves the norm when the bias is zero") {
    Rng rng(3);
    HanLayer layer;
    layer.u = unit_vector_init(rng, 24);
    layer.b = DenseVector(24, 0.0);
    DenseVector x = randn(rng, 24);
    auto [y, tape] = han_forward(layer, x);
    (void)tape;
    CHECK(norm2(y) == doctest::Approx(norm2(x)).epsilon(1e-12));
}

TEST_CASE("han backward bias gradient is sign(z) * grad_out") {
    Rng rng(4);
    HanLayer layer;
    layer.u = unit_vector_init(rng, 9);
    layer.b = randn(rng, 9);
    DenseVector x = randn(rng, 9);
    auto [y, tape] = han_forward(layer, x);
    (void)y;
    DenseVector g = randn(rng, 9);
    HanGrads grads = han_backward(layer, tape, g);
    for (std::size_t i = 0; i < 9; ++i) {
        const double sign = tape.pre_activation[i] < 0.0 ? -1.0 : 1.0;
        CHECK(grads.b[i] == doctest::Approx(sign * g[i]));
    }
}

TEST_CASE("han backward input gradient preserves the norm away from kinks") {
    Rng rng(5);
    HanLayer layer;
    layer.u = unit_vector_init(rng, 16);
    layer.b = randn(rng, 16);
    DenseVector x = randn(rng, 16);
    auto [y, tape] = han_forward(layer, x);
    (void)y;
    DenseVector g = randn(rng, 16);
    HanGrads grads = han_backward(layer, tape, g);
    CHECK(norm2(grads.input) == doctest::Approx(norm2(g)).epsilon(1e-12));
}

TEST_CASE("han gradients match finite differences over 100 draws") {
    Rng rng(6);
    double worst = 0.0;
    int done = 0;
    while (done < 100) {
        std::vector<LayerSpec> spec = {han_spec(30)};
        NetworkModel model = NetworkModel::build(spec, rng);
        auto& hl = std::get<HanLayer>(model.layers()[0]);
        hl.b = randn(rng, 30);
        DenseVector x = randn(rng, 30);
        auto [y, tapes] = model.forward(x);
        (void)y;
        if (oracle::kink_proximal(tapes)) continue;
        DenseVector c = randn(rng, 30);
        worst = std::max(worst, oracle::max_gradient_error(model, x, c));
        ++done;
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("fc identity layer passes values and gradients through") {
    FcLayer layer;
    layer.W = DenseMatrix::identity(3);
    layer.b = DenseVector(3, 0.0);
    layer.act = Activation::Identity;
    DenseVector x{0.5, -1.5, 2.0};
    auto [y, tape] = fc_forward(layer, x);
    CHECK(y.data == x.data);
    DenseVector g{1.0, 2.0, 3.0};
    FcGrads grads = fc_backward(layer, tape, g);
    CHECK(grads.input.data == g.data);
}

TEST_CASE("fc gradients match finite differences for both activations") {
    Rng rng(7);
    double worst = 0.0;
    int done = 0;
    while (done < 100) {
        const Activation act = (done % 2 == 0) ? Activation::Abs : Activation::Relu;
        std::vector<LayerSpec> spec = {fc_spec(6, 8, act, InitKind::Kaiming)};
        NetworkModel model = NetworkModel::build(spec, rng);
        auto& fc = std::get<FcLayer>(model.layers()[0]);
        fc.b = randn(rng, 8);
        DenseVector x = randn(rng, 6);
        auto [y, tapes] = model.forward(x);
        (void)y;
        if (oracle::kink_proximal(tapes)) continue;
        DenseVector c = randn(rng, 8);
        worst = std::max(worst, oracle::max_gradient_error(model, x, c));
        ++done;
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("a corrupted gradient is caught by the finite-difference oracle") {
    Rng rng(8);
    std::vector<LayerSpec> spec = {han_spec(12)};
    NetworkModel model = NetworkModel::build(spec, rng);
    DenseVector x = randn(rng, 12);
    auto [y, tapes] = model.forward(x);
    (void)y;
    DenseVector c = randn(rng, 12);
    Gradients grads = model.backward(tapes, c);
    std::vector<double> honest = oracle::flatten_gradients(grads, model);
    // flip the sign of one u-gradient coordinate, as a wrong chain rule would
    std::vector<double> corrupted = honest;
    corrupted[3] = -corrupted[3] - 1.0;
    oracle::FlatParams params(model);
    auto loss = [&]() {
        auto [out, t] = model.forward(x);
        (void)t;
        return dot(c, out);
    };
    double& p = *params.slots[3];
    const double saved = p;
    p = saved + 1e-6;
    const double up = loss();
    p = saved - 1e-6;
    const double down = loss();
    p = saved;
    const double fd = (up - down) / 2e-6;
    CHECK(std::abs(fd - honest[3]) / std::max(1.0, std::abs(fd)) <= 1e-5);
    CHECK(std::abs(fd - corrupted[3]) / std::max(1.0, std::abs(fd)) > 1e-5);
}

TEST_CASE("relu dead unit has zero outputs and weight gradients") {
    FcLayer layer;
    layer.W = DenseMatrix(4, 3, 0.01);
    layer.b = DenseVector(4, -5.0); // all pre-activations negative
    layer.act = Activation::Relu;
    auto [y, tape] = fc_forward(layer, DenseVector{1.0, 1.0, 1.0});
    for (double v : y.data) CHECK(v == 0.0);
    FcGrads grads = fc_backward(layer, tape, DenseVector{1.0, 1.0, 1.0, 1.0});
    for (double v : grads.W.data) CHECK(v == 0.0);
    for (double v : grads.b.data) CHECK(v == 0.0);
}

TEST_CASE("batched forward/backward agree with the single-sample path") {
    Rng rng(9);
    FcLayer fc;
    fc.W = kaiming_init(rng, 5, 7);
    fc.b = randn(rng, 7);
    fc.act = Activation::Abs;
    HanLayer hl;
    hl.u = unit_vector_init(rng, 7);
    hl.b = randn(rng, 7);

    const std::size_t batch = 6;
    DenseMatrix X(5, batch);
    for (double& v : X.data) v = rng.normal();
    BatchTape fc_tape = fc_forward_batch(fc, X);
    BatchTape han_tape = han_forward_batch(hl, fc_tape.output);
    DenseMatrix G(7, batch);
    for (double& v : G.data) v = rng.normal();
    FcBatchGrads fc_grads = fc_backward_batch(fc, fc_tape, G);
    HanBatchGrads han_grads = han_backward_batch(hl, han_tape, G);

    DenseMatrix fc_W_sum(7, 5, 0.0);
    DenseVector han_u_sum(7, 0.0);
    for (std::size_t j = 0; j < batch; ++j) {
        DenseVector xj(5), gj(7);
        for (std::size_t i = 0; i < 5; ++i) xj[i] = X(i, j);
        for (std::size_t i = 0; i < 7; ++i) gj[i] = G(i, j);
        auto [y1, t1] = fc_forward(fc, xj);
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(fc_tape.output(i, j) == doctest::Approx(y1[i]).epsilon(1e-12));
        }
        auto [y2, t2] = han_forward(hl, y1);
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(han_tape.output(i, j) == doctest::Approx(y2[i]).epsilon(1e-12));
        }
        FcGrads g1 = fc_backward(fc, t1, gj);
        for (std::size_t a = 0; a < fc_W_sum.size(); ++a) fc_W_sum.data[a] += g1.W.data[a];
        HanGrads g2 = han_backward(hl, t2, gj);
        for (std::size_t i = 0; i < 7; ++i) han_u_sum[i] += g2.u[i];
    }
    for (std::size_t a = 0; a < fc_W_sum.size(); ++a) {
        CHECK(fc_grads.W.data[a] == doctest::Approx(fc_W_sum.data[a]).epsilon(1e-10));
    }
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(han_grads.u[i] == doctest::Approx(han_u_sum[i]).epsilon(1e-10));
    }
}

TEST_SUITE_END();
