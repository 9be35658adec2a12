#pragma once

#include "han/layers.hpp"
#include "han/rng.hpp"

#include <string>
#include <variant>
#include <vector>

namespace han {

enum class LayerKind { Fc, Han };
enum class InitKind { Kaiming, Orthogonal, HanUnit, DenseDefault };

struct LayerSpec {
    LayerKind kind{LayerKind::Fc};
    std::size_t in_width{0};
    std::size_t out_width{0};
    Activation act{Activation::Identity};
    InitKind init{InitKind::Kaiming};
};

LayerSpec fc_spec(std::size_t in, std::size_t out, Activation act, InitKind init);
LayerSpec han_spec(std::size_t width, Activation act = Activation::Abs);

using Layer = std::variant<FcLayer, HanLayer>;

/// Per-layer parameter-shaped block; used for gradients and optimizer state.
/// W is populated for FC layers, u for Han layers, b for both.
struct ParamBlock {
    DenseMatrix W;
    DenseVector u;
    DenseVector b;
};
using Gradients = std::vector<ParamBlock>;

/// Batched forward pass bookkeeping (samples are columns).
struct ForwardTrace {
    DenseMatrix input;
    std::vector<BatchTape> tapes;
    const DenseMatrix& output() const { return tapes.empty() ? input : tapes.back().output; }
};

/// An ordered layer stack; widths of adjacent layers chain.
class NetworkModel {
public:
    NetworkModel() = default;

    /// Instantiate parameters for a validated spec list.
    static NetworkModel build(std::vector<LayerSpec> spec, Rng& rng);

    const std::vector<LayerSpec>& spec() const { return spec_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    std::size_t layer_count() const { return layers_.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;

    std::pair<DenseVector, std::vector<LayerTape>> forward(const DenseVector& x) const;

    /// Reverse accumulation through all layers; tapes must come from a
    /// matching forward on this model. grad_input, when non-null, receives
    /// the gradient with respect to the network input.
    Gradients backward(const std::vector<LayerTape>& tapes, const DenseVector& grad_out,
                       DenseVector* grad_input = nullptr) const;

    ForwardTrace forward_batch(const DenseMatrix& X) const;
    Gradients backward_batch(const ForwardTrace& trace, const DenseMatrix& grad_out,
                             DenseMatrix* grad_input = nullptr) const;

    /// Forward pass without tape retention, chunked over samples.
    DenseMatrix predict(const DenseMatrix& X, std::size_t chunk = 512) const;

    std::size_t param_count() const;
    double activation_ratio() const;

    Gradients zero_param_blocks() const;

    /// JSON model document (schema documented in docs/formats.md);
    /// format_version is embedded and checked on load.
    std::string to_json_text() const;
    static NetworkModel from_json_text(const std::string& text);
    void save(const std::string& path) const;
    static NetworkModel load(const std::string& path);

private:
    std::vector<LayerSpec> spec_;
    std::vector<Layer> layers_;
};

/// Validate a spec chain (adjacent widths, Han constraints). Throws Error.
void validate_spec(const std::vector<LayerSpec>& spec);

std::size_t param_count(const std::vector<LayerSpec>& spec);
double activation_ratio(const std::vector<LayerSpec>& spec);

/// Named architecture catalog (checkerboard-FCNet1/2/3, checkerboard-HanNet,
/// checkerboard-HanNet-18han, ablation-a..d, regression-FCNet1/2,
/// regression-HanNet). Throws UnknownName otherwise.
std::vector<LayerSpec> catalog_spec(const std::string& name, std::size_t input_dim,
                                    std::size_t output_dim);
NetworkModel build_named(const std::string& name, std::size_t input_dim, std::size_t output_dim,
                         Rng& rng);
std::vector<std::string> catalog_names();

/// A stack of `depth` Han layers of width `width` (no input/output mapping).
std::vector<LayerSpec> pure_han_spec(std::size_t width, std::size_t depth);

/// Sweep families used by the variability and landscape studies:
/// "fc-relu", "fc-abs", "han". depth counts hidden layers; the input
/// mapping is hidden layer 1 and an Identity output layer is appended.
std::vector<LayerSpec> family_spec(const std::string& family, std::size_t depth,
                                   std::size_t width, std::size_t input_dim,
                                   std::size_t output_dim);

/// Smallest width whose parameter count is closest to `budget` (ties go to
/// the smaller width). kind selects the hidden-layer family (Fc / Han).
std::size_t width_for_budget(std::size_t depth, std::size_t budget, std::size_t input_dim,
                             std::size_t output_dim, LayerKind kind);

} // namespace han
