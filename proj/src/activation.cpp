#include "han/activation.hpp"

#include "han/error.hpp"

namespace han {

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::Abs: return "abs";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "abs") return Activation::Abs;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    fail(ErrorCode::ParseError, "unknown activation '" + name + "'");
}

} // namespace han
