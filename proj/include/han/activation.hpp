#pragma once

#include <string>

namespace han {

enum class Activation { Abs, Relu, Identity };

/// phi(t), applied component-wise by the layer code.
inline double activate(Activation a, double t) {
    switch (a) {
    case Activation::Abs: return t < 0.0 ? -t : t;
    case Activation::Relu: return t > 0.0 ? t : 0.0;
    case Activation::Identity: return t;
    }
    return t;
}

/// phi'(t) evaluated at the pre-activation. Conventions: ABS uses
/// sign(0) = +1, which keeps the activation Jacobian orthogonal at the
/// kink; ReLU uses 0 at 0.
inline double activation_derivative(Activation a, double t) {
    switch (a) {
    case Activation::Abs: return t < 0.0 ? -1.0 : 1.0;
    case Activation::Relu: return t > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
    }
    return 1.0;
}

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

} // namespace han
