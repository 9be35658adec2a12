#include "han/layers.hpp"

#include "han/error.hpp"

#include <cmath>
#include <string>

namespace han {

namespace {

double reflector_norm_sq(const DenseVector& u) {
    double s = 0.0;
    for (double v : u.data) s += v * v;
    if (!(s >= kMinReflectorNormSq)) {
        fail(ErrorCode::DegenerateReflector,
             "householder: reflector norm^2 = " + std::to_string(s) +
                 " is below the minimum " + std::to_string(kMinReflectorNormSq));
    }
    return s;
}

void require_len(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": expected length " +
                                               std::to_string(want) + ", got " +
                                               std::to_string(got));
    }
}

} // namespace

DenseVector householder_apply(const DenseVector& u, const DenseVector& x) {
    require_len(x.size(), u.size(), "householder_apply input");
    const double s = reflector_norm_sq(u);
    const double coef = 2.0 * dot(u, x) / s;
    DenseVector y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - coef * u[i];
    return y;
}

std::pair<DenseVector, LayerTape> fc_forward(const FcLayer& layer, const DenseVector& x) {
    require_len(x.size(), layer.W.cols, "fc_forward input");
    DenseVector z = matvec(layer.W, x);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.b[i];
    DenseVector y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = activate(layer.act, z[i]);
    LayerTape tape{x, z, y};
    return {std::move(y), std::move(tape)};
}

std::pair<DenseVector, LayerTape> han_forward(const HanLayer& layer, const DenseVector& x) {
    require_len(x.size(), layer.u.size(), "han_forward input");
    DenseVector z = householder_apply(layer.u, x);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.b[i];
    DenseVector y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = activate(layer.act, z[i]);
    LayerTape tape{x, z, y};
    return {std::move(y), std::move(tape)};
}

FcGrads fc_backward(const FcLayer& layer, const LayerTape& tape, const DenseVector& grad_out) {
    require_len(grad_out.size(), layer.W.rows, "fc_backward grad_out");
    require_len(tape.pre_activation.size(), layer.W.rows, "fc_backward tape");
    require_len(tape.input.size(), layer.W.cols, "fc_backward tape input");

    const std::size_t out = layer.W.rows, in = layer.W.cols;
    DenseVector gz(out);
    for (std::size_t i = 0; i < out; ++i)
        gz[i] = activation_derivative(layer.act, tape.pre_activation[i]) * grad_out[i];

    FcGrads g;
    g.b = gz;
    g.W = DenseMatrix(out, in);
    for (std::size_t j = 0; j < in; ++j) {
        const double xj = tape.input[j];
        for (std::size_t i = 0; i < out; ++i) g.W(i, j) = gz[i] * xj;
    }
    g.input = DenseVector(in, 0.0);
    for (std::size_t j = 0; j < in; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < out; ++i) s += layer.W(i, j) * gz[i];
        g.input[j] = s;
    }
    return g;
}

HanGrads han_backward(const HanLayer& layer, const LayerTape& tape, const DenseVector& grad_out) {
    const std::size_t n = layer.u.size();
    require_len(grad_out.size(), n, "han_backward grad_out");
    require_len(tape.pre_activation.size(), n, "han_backward tape");
    require_len(tape.input.size(), n, "han_backward tape input");

    const double s = reflector_norm_sq(layer.u);
    DenseVector gz(n);
    for (std::size_t i = 0; i < n; ++i)
        gz[i] = activation_derivative(layer.act, tape.pre_activation[i]) * grad_out[i];

    // z = x - 2 (u.x/s) u + b. With a = u.x/s and c = u.gz/s:
    //   dz/dx^T gz = H gz            (H symmetric)
    //   dz/du^T gz = -2 (c x + a gz - 2 a c u)
    const double a = dot(layer.u, tape.input) / s;
    const double c = dot(layer.u, gz) / s;

    HanGrads g;
    g.b = gz;
    g.input = DenseVector(n);
    for (std::size_t i = 0; i < n; ++i) g.input[i] = gz[i] - 2.0 * c * layer.u[i];
    g.u = DenseVector(n);
    for (std::size_t i = 0; i < n; ++i)
        g.u[i] = -2.0 * (c * tape.input[i] + a * gz[i] - 2.0 * a * c * layer.u[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Batched variants.

BatchTape fc_forward_batch(const FcLayer& layer, const DenseMatrix& X) {
    if (X.rows != layer.W.cols) {
        fail(ErrorCode::DimensionMismatch,
             "fc_forward_batch: layer expects width " + std::to_string(layer.W.cols) +
                 ", batch has " + std::to_string(X.rows));
    }
    const std::size_t out = layer.W.rows, batch = X.cols;
    BatchTape tape;
    tape.input = X;
    tape.pre_activation = DenseMatrix(out, batch);
    gemm(false, false, 1.0, layer.W, X, 0.0, tape.pre_activation);
    for (std::size_t j = 0; j < batch; ++j) {
        double* col = tape.pre_activation.data.data() + j * out;
        for (std::size_t i = 0; i < out; ++i) col[i] += layer.b[i];
    }
    tape.output = tape.pre_activation;
    if (layer.act != Activation::Identity) {
        for (double& v : tape.output.data) v = activate(layer.act, v);
    }
    return tape;
}

BatchTape han_forward_batch(const HanLayer& layer, const DenseMatrix& X) {
    const std::size_t n = layer.u.size();
    if (X.rows != n) {
        fail(ErrorCode::DimensionMismatch,
             "han_forward_batch: layer expects width " + std::to_string(n) + ", batch has " +
                 std::to_string(X.rows));
    }
    const double s = reflector_norm_sq(layer.u);
    const std::size_t batch = X.cols;
    BatchTape tape;
    tape.input = X;
    tape.pre_activation = DenseMatrix(n, batch);
    const double* u = layer.u.data.data();
    const double* b = layer.b.data.data();
    for (std::size_t j = 0; j < batch; ++j) {
        const double* x = X.data.data() + j * n;
        double* z = tape.pre_activation.data.data() + j * n;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += u[i] * x[i];
        const double coef = 2.0 * proj / s;
        for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - coef * u[i] + b[i];
    }
    tape.output = tape.pre_activation;
    if (layer.act != Activation::Identity) {
        for (double& v : tape.output.data) v = activate(layer.act, v);
    }
    return tape;
}

FcBatchGrads fc_backward_batch(const FcLayer& layer, const BatchTape& tape,
                               const DenseMatrix& grad_out) {
    const std::size_t out = layer.W.rows, in = layer.W.cols, batch = tape.input.cols;
    if (grad_out.rows != out || grad_out.cols != batch) {
        fail(ErrorCode::DimensionMismatch, "fc_backward_batch: grad shape mismatch");
    }
    DenseMatrix gz = grad_out;
    if (layer.act != Activation::Identity) {
        for (std::size_t k = 0; k < gz.data.size(); ++k)
            gz.data[k] *= activation_derivative(layer.act, tape.pre_activation.data[k]);
    }
    FcBatchGrads g;
    g.W = DenseMatrix(out, in);
    gemm(false, true, 1.0, gz, tape.input, 0.0, g.W);
    g.b = DenseVector(out, 0.0);
    for (std::size_t j = 0; j < batch; ++j) {
        const double* col = gz.data.data() + j * out;
        for (std::size_t i = 0; i < out; ++i) g.b[i] += col[i];
    }
    g.input = DenseMatrix(in, batch);
    gemm(true, false, 1.0, layer.W, gz, 0.0, g.input);
    return g;
}

HanBatchGrads han_backward_batch(const HanLayer& layer, const BatchTape& tape,
                                 const DenseMatrix& grad_out) {
    const std::size_t n = layer.u.size(), batch = tape.input.cols;
    if (grad_out.rows != n || grad_out.cols != batch) {
        fail(ErrorCode::DimensionMismatch, "han_backward_batch: grad shape mismatch");
    }
    const double s = reflector_norm_sq(layer.u);
    const double* u = layer.u.data.data();

    DenseMatrix gz = grad_out;
    if (layer.act != Activation::Identity) {
        for (std::size_t k = 0; k < gz.data.size(); ++k)
            gz.data[k] *= activation_derivative(layer.act, tape.pre_activation.data[k]);
    }

    HanBatchGrads g;
    g.b = DenseVector(n, 0.0);
    g.u = DenseVector(n, 0.0);
    g.input = DenseMatrix(n, batch);
    double ac_sum = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
        const double* x = tape.input.data.data() + j * n;
        const double* gzj = gz.data.data() + j * n;
        double* gx = g.input.data.data() + j * n;
        double a = 0.0, c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a += u[i] * x[i];
            c += u[i] * gzj[i];
        }
        a /= s;
        c /= s;
        ac_sum += a * c;
        for (std::size_t i = 0; i < n; ++i) {
            g.b[i] += gzj[i];
            g.u[i] += -2.0 * (c * x[i] + a * gzj[i]);
            gx[i] = gzj[i] - 2.0 * c * u[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) g.u[i] += 4.0 * ac_sum * u[i];
    return g;
}

} // namespace han
