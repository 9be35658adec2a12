#pragma once

#include "han/activation.hpp"
#include "han/matrix.hpp"

#include <utility>

namespace han {

/// Reflector vectors with squared norm below kMinReflectorNormSq are
/// rejected: the reflection divides by ||u||^2.
inline constexpr double kMinReflectorNormSq = 1e-24; // (1e-12)^2

/// Fully connected layer: y = act(W x + b).
struct FcLayer {
    DenseMatrix W;   // out x in
    DenseVector b;   // out
    Activation act{Activation::Identity};
};

/// Householder-reflection layer: y = act(x - 2 (u.x / ||u||^2) u + b).
/// Square by construction; act is Abs in normal use (ReLU only appears in
/// ablation variants).
struct HanLayer {
    DenseVector u;
    DenseVector b;
    Activation act{Activation::Abs};
};

/// Values recorded by a forward pass and consumed by the backward pass.
struct LayerTape {
    DenseVector input;
    DenseVector pre_activation;
    DenseVector output;
};

/// H(u) x = x - 2 (u.x / ||u||^2) u, in O(n) without forming H.
DenseVector householder_apply(const DenseVector& u, const DenseVector& x);

std::pair<DenseVector, LayerTape> fc_forward(const FcLayer& layer, const DenseVector& x);
std::pair<DenseVector, LayerTape> han_forward(const HanLayer& layer, const DenseVector& x);

struct FcGrads {
    DenseVector input;
    DenseMatrix W;
    DenseVector b;
};

struct HanGrads {
    DenseVector input;
    DenseVector u;
    DenseVector b;
};

FcGrads fc_backward(const FcLayer& layer, const LayerTape& tape, const DenseVector& grad_out);
HanGrads han_backward(const HanLayer& layer, const LayerTape& tape, const DenseVector& grad_out);

// ---------------------------------------------------------------------------
// Batched variants used by training and dense evaluation. Samples are
// columns; shapes follow the single-vector ops column by column.

struct BatchTape {
    DenseMatrix input;           // in  x batch
    DenseMatrix pre_activation;  // out x batch
    DenseMatrix output;          // out x batch
};

BatchTape fc_forward_batch(const FcLayer& layer, const DenseMatrix& X);
BatchTape han_forward_batch(const HanLayer& layer, const DenseMatrix& X);

struct FcBatchGrads {
    DenseMatrix input;
    DenseMatrix W;
    DenseVector b;
};

struct HanBatchGrads {
    DenseMatrix input;
    DenseVector u;
    DenseVector b;
};

FcBatchGrads fc_backward_batch(const FcLayer& layer, const BatchTape& tape,
                               const DenseMatrix& grad_out);
HanBatchGrads han_backward_batch(const HanLayer& layer, const BatchTape& tape,
                                 const DenseMatrix& grad_out);

} // namespace han
