#include "han/network.hpp"

#include "han/error.hpp"
#include "han/init.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace han {

LayerSpec fc_spec(std::size_t in, std::size_t out, Activation act, InitKind init) {
    return LayerSpec{LayerKind::Fc, in, out, act, init};
}

LayerSpec han_spec(std::size_t width, Activation act) {
    return LayerSpec{LayerKind::Han, width, width, act, InitKind::HanUnit};
}

void validate_spec(const std::vector<LayerSpec>& spec) {
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const auto& s = spec[k];
        if (s.in_width == 0 || s.out_width == 0) {
            fail(ErrorCode::InvalidArgument,
                 "layer " + std::to_string(k) + ": zero width");
        }
        if (s.kind == LayerKind::Han) {
            if (s.in_width != s.out_width) {
                fail(ErrorCode::InvalidArgument,
                     "layer " + std::to_string(k) + ": Han layers are square, got " +
                         std::to_string(s.in_width) + "->" + std::to_string(s.out_width));
            }
            if (s.act == Activation::Identity) {
                fail(ErrorCode::InvalidArgument,
                     "layer " + std::to_string(k) + ": Han layers require an activation");
            }
        }
        if (k > 0 && spec[k - 1].out_width != s.in_width) {
            fail(ErrorCode::DimensionMismatch,
                 "layer widths do not chain at layer " + std::to_string(k) + ": " +
                     std::to_string(spec[k - 1].out_width) + " then " +
                     std::to_string(s.in_width));
        }
    }
}

NetworkModel NetworkModel::build(std::vector<LayerSpec> spec, Rng& rng) {
    validate_spec(spec);
    NetworkModel model;
    model.spec_ = std::move(spec);
    model.layers_.reserve(model.spec_.size());
    for (const auto& s : model.spec_) {
        if (s.kind == LayerKind::Fc) {
            FcLayer layer;
            layer.b = DenseVector(s.out_width, 0.0);
            if (s.init == InitKind::Orthogonal) {
                layer.W = orthogonal_init(rng, s.out_width, s.in_width);
            } else if (s.init == InitKind::DenseDefault) {
                // framework-default dense init: W and b uniform in
                // +/= 1/sqrt(fan_in); the scale the landscape and
                // variability studies assume
                const double bound = 1.0 / std::sqrt(static_cast<double>(s.in_width));
                layer.W = DenseMatrix(s.out_width, s.in_width);
                for (double& v : layer.W.data) v = bound * (2.0 * rng.uniform() - 1.0);
                for (double& v : layer.b.data) v = bound * (2.0 * rng.uniform() - 1.0);
            } else {
                layer.W = kaiming_init(rng, s.in_width, s.out_width);
            }
            layer.act = s.act;
            model.layers_.emplace_back(std::move(layer));
        } else {
            HanLayer layer;
            layer.u = unit_vector_init(rng, s.out_width);
            layer.b = DenseVector(s.out_width, 0.0);
            layer.act = s.act;
            model.layers_.emplace_back(std::move(layer));
        }
    }
    return model;
}

std::size_t NetworkModel::input_dim() const {
    return spec_.empty() ? 0 : spec_.front().in_width;
}

std::size_t NetworkModel::output_dim() const {
    return spec_.empty() ? 0 : spec_.back().out_width;
}

std::pair<DenseVector, std::vector<LayerTape>> NetworkModel::forward(const DenseVector& x) const {
    if (!spec_.empty() && x.size() != input_dim()) {
        fail(ErrorCode::DimensionMismatch, "forward: input length " + std::to_string(x.size()) +
                                               ", model expects " + std::to_string(input_dim()));
    }
    std::vector<LayerTape> tapes;
    tapes.reserve(layers_.size());
    DenseVector h = x;
    for (const auto& layer : layers_) {
        if (const auto* fc = std::get_if<FcLayer>(&layer)) {
            auto [y, tape] = fc_forward(*fc, h);
            h = std::move(y);
            tapes.push_back(std::move(tape));
        } else {
            auto [y, tape] = han_forward(std::get<HanLayer>(layer), h);
            h = std::move(y);
            tapes.push_back(std::move(tape));
        }
    }
    return {std::move(h), std::move(tapes)};
}

Gradients NetworkModel::backward(const std::vector<LayerTape>& tapes, const DenseVector& grad_out,
                                 DenseVector* grad_input) const {
    if (tapes.size() != layers_.size()) {
        fail(ErrorCode::InvalidArgument, "backward: got " + std::to_string(tapes.size()) +
                                             " tapes for " + std::to_string(layers_.size()) +
                                             " layers (stale trace?)");
    }
    if (!spec_.empty() && grad_out.size() != output_dim()) {
        fail(ErrorCode::DimensionMismatch, "backward: grad_out length mismatch");
    }
    Gradients grads(layers_.size());
    DenseVector g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& s = spec_[k];
        if (tapes[k].input.size() != s.in_width || tapes[k].output.size() != s.out_width) {
            fail(ErrorCode::InvalidArgument,
                 "backward: tape " + std::to_string(k) + " does not match this model");
        }
        if (const auto* fc = std::get_if<FcLayer>(&layers_[k])) {
            FcGrads lg = fc_backward(*fc, tapes[k], g);
            grads[k].W = std::move(lg.W);
            grads[k].b = std::move(lg.b);
            g = std::move(lg.input);
        } else {
            HanGrads lg = han_backward(std::get<HanLayer>(layers_[k]), tapes[k], g);
            grads[k].u = std::move(lg.u);
            grads[k].b = std::move(lg.b);
            g = std::move(lg.input);
        }
    }
    if (grad_input) *grad_input = std::move(g);
    return grads;
}

ForwardTrace NetworkModel::forward_batch(const DenseMatrix& X) const {
    if (!spec_.empty() && X.rows != input_dim()) {
        fail(ErrorCode::DimensionMismatch, "forward_batch: batch row count " +
                                               std::to_string(X.rows) + ", model expects " +
                                               std::to_string(input_dim()));
    }
    ForwardTrace trace;
    trace.input = X;
    trace.tapes.reserve(layers_.size());
    const DenseMatrix* h = &trace.input;
    for (const auto& layer : layers_) {
        if (const auto* fc = std::get_if<FcLayer>(&layer)) {
            trace.tapes.push_back(fc_forward_batch(*fc, *h));
        } else {
            trace.tapes.push_back(han_forward_batch(std::get<HanLayer>(layer), *h));
        }
        h = &trace.tapes.back().output;
    }
    return trace;
}

Gradients NetworkModel::backward_batch(const ForwardTrace& trace, const DenseMatrix& grad_out,
                                       DenseMatrix* grad_input) const {
    if (trace.tapes.size() != layers_.size()) {
        fail(ErrorCode::InvalidArgument, "backward_batch: trace does not match model depth");
    }
    Gradients grads(layers_.size());
    DenseMatrix g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        if (const auto* fc = std::get_if<FcLayer>(&layers_[k])) {
            FcBatchGrads lg = fc_backward_batch(*fc, trace.tapes[k], g);
            grads[k].W = std::move(lg.W);
            grads[k].b = std::move(lg.b);
            g = std::move(lg.input);
        } else {
            HanBatchGrads lg = han_backward_batch(std::get<HanLayer>(layers_[k]), trace.tapes[k], g);
            grads[k].u = std::move(lg.u);
            grads[k].b = std::move(lg.b);
            g = std::move(lg.input);
        }
    }
    if (grad_input) *grad_input = std::move(g);
    return grads;
}

namespace {

// Tape-free layer application for evaluation paths.
DenseMatrix eval_layer(const Layer& layer, const DenseMatrix& X) {
    if (const auto* fc = std::get_if<FcLayer>(&layer)) {
        DenseMatrix Z(fc->W.rows, X.cols);
        gemm(false, false, 1.0, fc->W, X, 0.0, Z);
        for (std::size_t j = 0; j < Z.cols; ++j) {
            double* col = Z.data.data() + j * Z.rows;
            for (std::size_t i = 0; i < Z.rows; ++i) col[i] += fc->b[i];
        }
        if (fc->act != Activation::Identity)
            for (double& v : Z.data) v = activate(fc->act, v);
        return Z;
    }
    const auto& hl = std::get<HanLayer>(layer);
    const std::size_t n = hl.u.size();
    double s = 0.0;
    for (double v : hl.u.data) s += v * v;
    if (!(s >= kMinReflectorNormSq)) {
        fail(ErrorCode::DegenerateReflector, "eval: degenerate reflector");
    }
    DenseMatrix Z(n, X.cols);
    const double* u = hl.u.data.data();
    for (std::size_t j = 0; j < X.cols; ++j) {
        const double* x = X.data.data() + j * n;
        double* z = Z.data.data() + j * n;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += u[i] * x[i];
        const double coef = 2.0 * proj / s;
        for (std::size_t i = 0; i < n; ++i) z[i] = activate(hl.act, x[i] - coef * u[i] + hl.b[i]);
    }
    return Z;
}

} // namespace

DenseMatrix NetworkModel::predict(const DenseMatrix& X, std::size_t chunk) const {
    if (spec_.empty()) return X;
    if (X.rows != input_dim()) {
        fail(ErrorCode::DimensionMismatch, "predict: batch row mismatch");
    }
    if (chunk == 0) chunk = X.cols;
    DenseMatrix Y(output_dim(), X.cols);
    for (std::size_t start = 0; start < X.cols; start += chunk) {
        const std::size_t m = std::min(chunk, X.cols - start);
        DenseMatrix H(X.rows, m);
        std::copy(X.data.begin() + start * X.rows, X.data.begin() + (start + m) * X.rows,
                  H.data.begin());
        for (const auto& layer : layers_) H = eval_layer(layer, H);
        std::copy(H.data.begin(), H.data.end(), Y.data.begin() + start * Y.rows);
    }
    return Y;
}

std::size_t param_count(const std::vector<LayerSpec>& spec) {
    std::size_t total = 0;
    for (const auto& s : spec) {
        if (s.kind == LayerKind::Fc) {
            total += s.out_width * s.in_width + s.out_width;
        } else {
            total += 2 * s.out_width;
        }
    }
    return total;
}

double activation_ratio(const std::vector<LayerSpec>& spec) {
    const std::size_t params = param_count(spec);
    if (params == 0) return 0.0;
    std::size_t activations = 0;
    for (const auto& s : spec) {
        if (s.act != Activation::Identity) activations += s.out_width;
    }
    return static_cast<double>(activations) / static_cast<double>(params);
}

std::size_t NetworkModel::param_count() const { return han::param_count(spec_); }
double NetworkModel::activation_ratio() const { return han::activation_ratio(spec_); }

Gradients NetworkModel::zero_param_blocks() const {
    Gradients blocks(spec_.size());
    for (std::size_t k = 0; k < spec_.size(); ++k) {
        const auto& s = spec_[k];
        if (s.kind == LayerKind::Fc) {
            blocks[k].W = DenseMatrix(s.out_width, s.in_width, 0.0);
        } else {
            blocks[k].u = DenseVector(s.out_width, 0.0);
        }
        blocks[k].b = DenseVector(s.out_width, 0.0);
    }
    return blocks;
}

// ---------------------------------------------------------------------------
// Catalog.

namespace {

std::vector<LayerSpec> fc_net(std::size_t input_dim, std::size_t output_dim, std::size_t depth,
                              std::size_t width, Activation act, InitKind init) {
    std::vector<LayerSpec> spec;
    spec.push_back(fc_spec(input_dim, width, act, init));
    for (std::size_t k = 1; k < depth; ++k) spec.push_back(fc_spec(width, width, act, init));
    spec.push_back(fc_spec(width, output_dim, Activation::Identity, init));
    return spec;
}

// 20x30 scaffolds. Table-row reading: hidden layers are [FC d->30,
// FC 30->30, 17 middle layers, FC 30->30]; natural reading: [FC d->30,
// 18 middle layers, FC 30->30]. Both end in an Identity output layer. The
// middle layers are Householder or FC per `householder`; `act` applies to
// every hidden layer. The ablation cells use the natural frame, whose
// H+ABS cell is exactly the natural-reading HanNet.
std::vector<LayerSpec> frame_20x30(std::size_t input_dim, std::size_t output_dim, bool householder,
                                   Activation act, bool natural) {
    const std::size_t w = 30;
    const InitKind init = householder ? InitKind::Orthogonal : InitKind::Kaiming;
    std::vector<LayerSpec> spec;
    spec.push_back(fc_spec(input_dim, w, act, init));
    if (!natural) spec.push_back(fc_spec(w, w, act, init));
    const int middle = natural ? 18 : 17;
    for (int k = 0; k < middle; ++k) {
        if (householder) {
            spec.push_back(han_spec(w, act));
        } else {
            spec.push_back(fc_spec(w, w, act, init));
        }
    }
    spec.push_back(fc_spec(w, w, act, init));
    spec.push_back(fc_spec(w, output_dim, Activation::Identity, init));
    return spec;
}

std::vector<LayerSpec> regression_hannet(std::size_t input_dim, std::size_t output_dim) {
    const std::size_t w = 200;
    std::vector<LayerSpec> spec;
    spec.push_back(fc_spec(input_dim, w, Activation::Abs, InitKind::Orthogonal));
    for (int k = 0; k < 19; ++k) spec.push_back(han_spec(w));
    spec.push_back(fc_spec(w, output_dim, Activation::Identity, InitKind::Orthogonal));
    return spec;
}

} // namespace

std::vector<LayerSpec> catalog_spec(const std::string& name, std::size_t input_dim,
                                    std::size_t output_dim) {
    if (name == "checkerboard-FCNet1")
        return fc_net(input_dim, output_dim, 6, 100, Activation::Relu, InitKind::Kaiming);
    if (name == "checkerboard-FCNet2")
        return fc_net(input_dim, output_dim, 10, 100, Activation::Relu, InitKind::Kaiming);
    if (name == "checkerboard-FCNet3")
        return fc_net(input_dim, output_dim, 6, 300, Activation::Relu, InitKind::Kaiming);
    if (name == "checkerboard-HanNet")
        return frame_20x30(input_dim, output_dim, true, Activation::Abs, false);
    if (name == "checkerboard-HanNet-18han" || name == "ablation-a")
        return frame_20x30(input_dim, output_dim, true, Activation::Abs, true);
    if (name == "ablation-b")
        return frame_20x30(input_dim, output_dim, true, Activation::Relu, true);
    if (name == "ablation-c")
        return frame_20x30(input_dim, output_dim, false, Activation::Abs, true);
    if (name == "ablation-d")
        return frame_20x30(input_dim, output_dim, false, Activation::Relu, true);
    if (name == "regression-FCNet1")
        return fc_net(input_dim, output_dim, 5, 50, Activation::Relu, InitKind::Kaiming);
    if (name == "regression-FCNet2")
        return fc_net(input_dim, output_dim, 5, 200, Activation::Relu, InitKind::Kaiming);
    if (name == "regression-HanNet") return regression_hannet(input_dim, output_dim);
    fail(ErrorCode::UnknownName, "unknown architecture '" + name + "'");
}

NetworkModel build_named(const std::string& name, std::size_t input_dim, std::size_t output_dim,
                         Rng& rng) {
    return NetworkModel::build(catalog_spec(name, input_dim, output_dim), rng);
}

std::vector<std::string> catalog_names() {
    return {"checkerboard-FCNet1", "checkerboard-FCNet2", "checkerboard-FCNet3",
            "checkerboard-HanNet", "checkerboard-HanNet-18han", "ablation-a", "ablation-b",
            "ablation-c", "ablation-d", "regression-FCNet1", "regression-FCNet2",
            "regression-HanNet"};
}

std::vector<LayerSpec> pure_han_spec(std::size_t width, std::size_t depth) {
    std::vector<LayerSpec> spec;
    for (std::size_t k = 0; k < depth; ++k) spec.push_back(han_spec(width));
    return spec;
}

std::vector<LayerSpec> family_spec(const std::string& family, std::size_t depth,
                                   std::size_t width, std::size_t input_dim,
                                   std::size_t output_dim) {
    if (depth == 0) fail(ErrorCode::InvalidArgument, "family_spec: depth must be >= 1");
    if (family == "fc-relu")
        return fc_net(input_dim, output_dim, depth, width, Activation::Relu,
                      InitKind::DenseDefault);
    if (family == "fc-abs")
        return fc_net(input_dim, output_dim, depth, width, Activation::Abs,
                      InitKind::DenseDefault);
    if (family == "han") {
        std::vector<LayerSpec> spec;
        spec.push_back(fc_spec(input_dim, width, Activation::Abs, InitKind::Orthogonal));
        for (std::size_t k = 1; k < depth; ++k) spec.push_back(han_spec(width));
        spec.push_back(fc_spec(width, output_dim, Activation::Identity, InitKind::Orthogonal));
        return spec;
    }
    fail(ErrorCode::UnknownName, "unknown family '" + family + "' (fc-relu | fc-abs | han)");
}

std::size_t width_for_budget(std::size_t depth, std::size_t budget, std::size_t input_dim,
                             std::size_t output_dim, LayerKind kind) {
    if (depth == 0) fail(ErrorCode::InvalidArgument, "width_for_budget: depth must be >= 1");
    auto count = [&](std::size_t w) -> std::size_t {
        const std::string family = (kind == LayerKind::Fc) ? "fc-relu" : "han";
        return param_count(family_spec(family, depth, w, input_dim, output_dim));
    };
    if (budget < count(1)) {
        fail(ErrorCode::InvalidArgument,
             "width_for_budget: budget " + std::to_string(budget) +
                 " is below the minimum parameter count " + std::to_string(count(1)));
    }
    std::size_t w = 1;
    while (count(w + 1) <= budget) ++w;
    // candidates: w (<= budget side unless w==1) and w+1; closest wins, ties
    // go to the smaller width.
    const std::size_t below = count(w), above = count(w + 1);
    const std::size_t diff_below = below > budget ? below - budget : budget - below;
    const std::size_t diff_above = above - budget;
    return diff_below <= diff_above ? w : w + 1;
}

// ---------------------------------------------------------------------------
// JSON model document.

namespace {

constexpr int kFormatVersion = 1;

const char* kind_name(LayerKind k) { return k == LayerKind::Fc ? "fc" : "han"; }

const char* init_name(InitKind k) {
    switch (k) {
    case InitKind::Kaiming: return "kaiming";
    case InitKind::Orthogonal: return "orthogonal";
    case InitKind::HanUnit: return "han-unit";
    case InitKind::DenseDefault: return "dense-default";
    }
    return "kaiming";
}

InitKind init_from_name(const std::string& name) {
    if (name == "kaiming") return InitKind::Kaiming;
    if (name == "orthogonal") return InitKind::Orthogonal;
    if (name == "han-unit") return InitKind::HanUnit;
    if (name == "dense-default") return InitKind::DenseDefault;
    fail(ErrorCode::ParseError, "unknown init '" + name + "'");
}

} // namespace

std::string NetworkModel::to_json_text() const {
    nlohmann::json doc;
    doc["format_version"] = kFormatVersion;
    doc["layers"] = nlohmann::json::array();
    for (std::size_t k = 0; k < spec_.size(); ++k) {
        const auto& s = spec_[k];
        nlohmann::json jl;
        jl["kind"] = kind_name(s.kind);
        jl["in"] = s.in_width;
        jl["out"] = s.out_width;
        jl["act"] = activation_name(s.act);
        jl["init"] = init_name(s.init);
        if (const auto* fc = std::get_if<FcLayer>(&layers_[k])) {
            jl["W"] = fc->W.data;
            jl["b"] = fc->b.data;
        } else {
            const auto& hl = std::get<HanLayer>(layers_[k]);
            jl["u"] = hl.u.data;
            jl["b"] = hl.b.data;
        }
        doc["layers"].push_back(std::move(jl));
    }
    return doc.dump();
}

NetworkModel NetworkModel::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("model JSON: ") + e.what());
    }
    try {
        if (!doc.contains("format_version") || doc["format_version"].get<int>() != kFormatVersion) {
            fail(ErrorCode::ParseError, "model JSON: missing or unsupported format_version");
        }
        NetworkModel model;
        for (const auto& jl : doc.at("layers")) {
            LayerSpec s;
            s.kind = jl.at("kind").get<std::string>() == "fc" ? LayerKind::Fc : LayerKind::Han;
            s.in_width = jl.at("in").get<std::size_t>();
            s.out_width = jl.at("out").get<std::size_t>();
            s.act = activation_from_name(jl.at("act").get<std::string>());
            s.init = init_from_name(jl.at("init").get<std::string>());
            model.spec_.push_back(s);
            if (s.kind == LayerKind::Fc) {
                FcLayer layer;
                layer.W = DenseMatrix(s.out_width, s.in_width);
                auto w = jl.at("W").get<std::vector<double>>();
                if (w.size() != layer.W.size()) {
                    fail(ErrorCode::ParseError, "model JSON: W size mismatch");
                }
                layer.W.data = std::move(w);
                layer.b.data = jl.at("b").get<std::vector<double>>();
                if (layer.b.size() != s.out_width) {
                    fail(ErrorCode::ParseError, "model JSON: b size mismatch");
                }
                layer.act = s.act;
                model.layers_.emplace_back(std::move(layer));
            } else {
                HanLayer layer;
                layer.u.data = jl.at("u").get<std::vector<double>>();
                layer.b.data = jl.at("b").get<std::vector<double>>();
                if (layer.u.size() != s.out_width || layer.b.size() != s.out_width) {
                    fail(ErrorCode::ParseError, "model JSON: u/b size mismatch");
                }
                layer.act = s.act;
                model.layers_.emplace_back(std::move(layer));
            }
        }
        validate_spec(model.spec_);
        return model;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("model JSON: ") + e.what());
    }
}

void NetworkModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    out << to_json_text() << '\n';
    if (!out) fail(ErrorCode::IoError, "write failed for '" + path + "'");
}

NetworkModel NetworkModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

} // namespace han
