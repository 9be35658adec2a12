#include "han/training.hpp"

#include "han/error.hpp"
#include "han/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <limits>

namespace han {

double anneal_schedule(double base_lr, std::size_t iterations, std::size_t t) {
    if (t >= iterations) {
        fail(ErrorCode::InvalidArgument, "anneal_schedule: t must satisfy 0 <= t < iterations");
    }
    const std::size_t thresholds[3] = {iterations / 2, (7 * iterations) / 10,
                                       (9 * iterations) / 10};
    int k = 0;
    for (std::size_t thr : thresholds) {
        if (t >= thr) ++k;
    }
    static constexpr double kFactors[4] = {1.0, 5.0, 25.0, 125.0};
    return base_lr / kFactors[k];
}

OptimizerState make_optimizer_state(const NetworkModel& model, OptimizerConfig::Kind kind) {
    OptimizerState state;
    state.velocity = model.zero_param_blocks();
    if (kind == OptimizerConfig::Kind::Adam) state.second_moment = model.zero_param_blocks();
    return state;
}

namespace {

void sgd_update_array(double* p, const double* g, double* v, std::size_t n, double lr,
                      double momentum, double weight_decay) {
    for (std::size_t i = 0; i < n; ++i) {
        const double grad = g[i] + weight_decay * p[i];
        v[i] = momentum * v[i] + grad;
        p[i] -= lr * v[i];
    }
}

void adam_update_array(double* p, const double* g, double* m, double* v, std::size_t n,
                       const AdamConfig& cfg, double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

template <typename Fn>
void for_each_param_array(NetworkModel& model, const Gradients& grads, OptimizerState& state,
                          bool with_second, Fn&& fn) {
    auto& layers = model.layers();
    if (grads.size() != layers.size() || state.velocity.size() != layers.size() ||
        (with_second && state.second_moment.size() != layers.size())) {
        fail(ErrorCode::DimensionMismatch, "optimizer: state/gradient shape mismatch");
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& vel = state.velocity[k];
        auto* mom2 = with_second ? &state.second_moment[k] : nullptr;
        if (auto* fc = std::get_if<FcLayer>(&layers[k])) {
            if (grads[k].W.size() != fc->W.size() || grads[k].b.size() != fc->b.size()) {
                fail(ErrorCode::DimensionMismatch, "optimizer: gradient shape mismatch at layer " +
                                                       std::to_string(k));
            }
            fn(fc->W.data.data(), grads[k].W.data.data(), vel.W.data.data(),
               mom2 ? mom2->W.data.data() : nullptr, fc->W.size());
            fn(fc->b.data.data(), grads[k].b.data.data(), vel.b.data.data(),
               mom2 ? mom2->b.data.data() : nullptr, fc->b.size());
        } else {
            auto& hl = std::get<HanLayer>(layers[k]);
            if (grads[k].u.size() != hl.u.size() || grads[k].b.size() != hl.b.size()) {
                fail(ErrorCode::DimensionMismatch, "optimizer: gradient shape mismatch at layer " +
                                                       std::to_string(k));
            }
            fn(hl.u.data.data(), grads[k].u.data.data(), vel.u.data.data(),
               mom2 ? mom2->u.data.data() : nullptr, hl.u.size());
            fn(hl.b.data.data(), grads[k].b.data.data(), vel.b.data.data(),
               mom2 ? mom2->b.data.data() : nullptr, hl.b.size());
        }
    }
}

} // namespace

void sgd_step(NetworkModel& model, const Gradients& grads, OptimizerState& state,
              const SgdConfig& cfg, double lr_now) {
    for_each_param_array(model, grads, state, false,
                         [&](double* p, const double* g, double* v, double*, std::size_t n) {
                             sgd_update_array(p, g, v, n, lr_now, cfg.momentum,
                                              cfg.weight_decay);
                         });
}

void adam_step(NetworkModel& model, const Gradients& grads, OptimizerState& state,
               const AdamConfig& cfg, std::size_t t) {
    if (t == 0) fail(ErrorCode::InvalidArgument, "adam_step: step index starts at 1");
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for_each_param_array(model, grads, state, true,
                         [&](double* p, const double* g, double* m, double* v, std::size_t n) {
                             adam_update_array(p, g, m, v, n, cfg, bias1, bias2);
                         });
}

// ---------------------------------------------------------------------------
// Loss / metric evaluation.

namespace {

// Returns batch loss; writes the output gradient into grad (same shape).
double loss_and_grad(LossKind loss, const DenseMatrix& Y, const DenseMatrix& T,
                     DenseMatrix& grad) {
    const std::size_t total = Y.data.size();
    grad.rows = Y.rows;
    grad.cols = Y.cols;
    grad.data.resize(total);
    if (loss == LossKind::Mse) {
        double sum = 0.0;
        const double scale = 1.0 / static_cast<double>(total);
        for (std::size_t i = 0; i < total; ++i) {
            const double d = Y.data[i] - T.data[i];
            sum += d * d;
            grad.data[i] = 2.0 * d * scale;
        }
        return sum * scale;
    }
    // Softmax cross-entropy, mean over the batch.
    const std::size_t rows = Y.rows, cols = Y.cols;
    const double scale = 1.0 / static_cast<double>(cols);
    double total_loss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double* y = Y.data.data() + j * rows;
        const double* t = T.data.data() + j * rows;
        double* g = grad.data.data() + j * rows;
        double maxv = y[0];
        for (std::size_t i = 1; i < rows; ++i) maxv = std::max(maxv, y[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < rows; ++i) z += std::exp(y[i] - maxv);
        const double logz = std::log(z) + maxv;
        for (std::size_t i = 0; i < rows; ++i) {
            const double p = std::exp(y[i] - logz);
            g[i] = (p - t[i]) * scale;
            total_loss -= t[i] * (y[i] - logz);
        }
    }
    return total_loss * scale;
}

double dataset_loss(LossKind loss, const DenseMatrix& Y, const DenseMatrix& T) {
    if (loss == LossKind::Mse) {
        double sum = 0.0;
        for (std::size_t i = 0; i < Y.data.size(); ++i) {
            const double d = Y.data[i] - T.data[i];
            sum += d * d;
        }
        return sum / static_cast<double>(Y.data.size());
    }
    DenseMatrix scratch;
    return loss_and_grad(loss, Y, T, scratch);
}

double metric_of(const MetricKind metric, const DenseMatrix& pred, const DenseMatrix& targets,
                 const std::vector<int>& labels, const NormStats& stats, NrmseNorm nn) {
    if (metric == MetricKind::Accuracy) return accuracy(pred, labels);
    DenseVector p(pred.cols), t(targets.cols);
    for (std::size_t j = 0; j < pred.cols; ++j) {
        p[j] = pred(0, j) * stats.target_std + stats.target_mean;
        t[j] = targets(0, j) * stats.target_std + stats.target_mean;
    }
    return nrmse(p, t, stats, nn);
}

} // namespace

bool metric_improves(MetricKind metric, double candidate, double incumbent) {
    return metric == MetricKind::Accuracy ? candidate > incumbent : candidate < incumbent;
}

RunRecord train(NetworkModel& model, const DatasetSplit& data, const TrainSettings& settings,
                std::uint64_t shuffle_seed) {
    const std::size_t n_train = data.X_train.cols;
    if (n_train == 0) fail(ErrorCode::InvalidArgument, "train: empty training split");
    if (data.X_train.rows != model.input_dim() || data.Y_train.rows != model.output_dim()) {
        fail(ErrorCode::DimensionMismatch,
             "train: dataset shapes do not match the model (features " +
                 std::to_string(data.X_train.rows) + "->" + std::to_string(model.input_dim()) +
                 ", targets " + std::to_string(data.Y_train.rows) + "->" +
                 std::to_string(model.output_dim()) + ")");
    }

    const bool is_sgd = settings.opt.kind == OptimizerConfig::Kind::Sgd;
    const std::size_t batch_size =
        std::min(is_sgd ? settings.opt.sgd.batch_size : settings.opt.adam.batch_size, n_train);
    if (batch_size == 0) fail(ErrorCode::InvalidArgument, "train: batch size must be >= 1");
    const std::size_t batches_per_epoch = (n_train + batch_size - 1) / batch_size;
    const std::size_t total_steps = is_sgd
                                        ? settings.opt.sgd.iterations
                                        : settings.opt.adam.epochs * batches_per_epoch;
    if (total_steps == 0) fail(ErrorCode::InvalidArgument, "train: zero training steps");
    const std::size_t eval_every =
        settings.eval_every == 0 ? batches_per_epoch : settings.eval_every;

    RunRecord record;
    record.seed = shuffle_seed;
    record.iterations = total_steps;
    record.rate = is_sgd ? settings.opt.sgd.lr : settings.opt.adam.lr;

    OptimizerState state = make_optimizer_state(model, settings.opt.kind);
    Rng rng(shuffle_seed);
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t cursor = 0;

    DenseMatrix xb, tb, grad_out;
    const bool higher_is_better = settings.metric == MetricKind::Accuracy;
    record.best_test_metric = higher_is_better ? -std::numeric_limits<double>::infinity()
                                               : std::numeric_limits<double>::infinity();

    auto evaluate = [&](std::size_t iteration) {
        DenseMatrix pred_train = model.predict(data.X_train);
        DenseMatrix pred_test = model.predict(data.X_test);
        EvalPoint pt;
        pt.iteration = iteration;
        pt.train_loss = dataset_loss(settings.loss, pred_train, data.Y_train);
        pt.train_metric = metric_of(settings.metric, pred_train, data.Y_train,
                                    data.labels_train, data.norm, settings.nrmse_norm);
        pt.test_metric = metric_of(settings.metric, pred_test, data.Y_test, data.labels_test,
                                   data.norm, settings.nrmse_norm);
        record.series.push_back(pt);
        if (metric_improves(settings.metric, pt.test_metric, record.best_test_metric)) {
            record.best_test_metric = pt.test_metric;
            record.best_iteration = iteration;
        }
    };

    const auto t_start = std::chrono::steady_clock::now();
    try {
        for (std::size_t t = 1; t <= total_steps; ++t) {
            // next mini-batch; reshuffle when the epoch is exhausted
            if (cursor >= n_train) {
                rng.shuffle(order);
                cursor = 0;
            }
            const std::size_t m = std::min(batch_size, n_train - cursor);
            xb.rows = data.X_train.rows;
            xb.cols = m;
            xb.data.resize(xb.rows * m);
            tb.rows = data.Y_train.rows;
            tb.cols = m;
            tb.data.resize(tb.rows * m);
            for (std::size_t c = 0; c < m; ++c) {
                const std::size_t s = order[cursor + c];
                std::copy_n(data.X_train.data.data() + s * xb.rows, xb.rows,
                            xb.data.data() + c * xb.rows);
                std::copy_n(data.Y_train.data.data() + s * tb.rows, tb.rows,
                            tb.data.data() + c * tb.rows);
            }
            cursor += m;

            ForwardTrace trace = model.forward_batch(xb);
            const double batch_loss = loss_and_grad(settings.loss, trace.output(), tb, grad_out);
            if (!std::isfinite(batch_loss)) {
                record.failed = true;
                break;
            }
            Gradients grads = model.backward_batch(trace, grad_out);
            if (is_sgd) {
                const double lr_now =
                    settings.opt.sgd.anneal
                        ? anneal_schedule(settings.opt.sgd.lr, total_steps, t - 1)
                        : settings.opt.sgd.lr;
                sgd_step(model, grads, state, settings.opt.sgd, lr_now);
            } else {
                adam_step(model, grads, state, settings.opt.adam, t);
            }
            if (t % eval_every == 0 || t == total_steps) evaluate(t);
        }
    } catch (const Error& e) {
        // A degenerate reflector mid-run is a divergence, not a caller bug.
        if (e.code() != ErrorCode::DegenerateReflector) throw;
        record.failed = true;
    }

    if (record.series.empty() && !record.failed) evaluate(total_steps);
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (!record.series.empty()) {
        const auto& last = record.series.back();
        record.final_train_loss = last.train_loss;
        record.final_train_metric = last.train_metric;
        record.final_test_metric = last.test_metric;
    } else {
        record.final_train_loss = std::numeric_limits<double>::quiet_NaN();
        record.final_train_metric = std::numeric_limits<double>::quiet_NaN();
        record.final_test_metric = std::numeric_limits<double>::quiet_NaN();
    }
    return record;
}

GridSearchResult lr_grid_search(const std::function<RunRecord(double)>& run_at_rate,
                                const std::vector<double>& rates, MetricKind metric,
                                bool select_on_test) {
    if (rates.empty()) fail(ErrorCode::InvalidArgument, "grid search: empty rate list");
    GridSearchResult result;
    result.all.reserve(rates.size());
    std::optional<std::size_t> best;
    for (double rate : rates) {
        RunRecord rec = run_at_rate(rate);
        rec.rate = rate;
        result.all.push_back(std::move(rec));
        const auto& r = result.all.back();
        if (r.failed) continue;
        const double value = select_on_test ? r.final_test_metric : r.final_train_metric;
        if (!best.has_value()) {
            best = result.all.size() - 1;
            continue;
        }
        const auto& b = result.all[*best];
        const double best_value = select_on_test ? b.final_test_metric : b.final_train_metric;
        if (metric_improves(metric, value, best_value)) best = result.all.size() - 1;
    }
    if (!best.has_value()) {
        fail(ErrorCode::Diverged, "grid search: every run diverged to a non-finite loss");
    }
    result.best = result.all[*best];
    return result;
}

const std::vector<double>& paper_rate_grid() {
    static const std::vector<double> rates = {0.001, 0.005, 0.01, 0.025, 0.05,
                                              0.075, 0.1,   0.25, 0.5,  1.0};
    return rates;
}

AggregateStats aggregate(const std::vector<double>& values) {
    AggregateStats stats;
    if (values.empty()) return stats;
    stats.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                 static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            const double d = v - stats.mean;
            ss += d * d;
        }
        stats.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return stats;
}

MultiSeedResult multi_seed(const std::function<RunRecord(std::uint64_t)>& run_at_seed,
                           std::uint64_t master_seed, std::size_t n_seeds) {
    if (n_seeds == 0) fail(ErrorCode::InvalidArgument, "multi_seed: need at least one seed");
    MultiSeedResult result;
    result.records.reserve(n_seeds);
    std::vector<double> tests, trains;
    for (std::size_t k = 0; k < n_seeds; ++k) {
        RunRecord rec = run_at_seed(derive_seed(master_seed, k));
        result.records.push_back(std::move(rec));
        const auto& r = result.records.back();
        if (!r.failed) {
            tests.push_back(r.final_test_metric);
            trains.push_back(r.final_train_metric);
        }
    }
    result.test_metric = aggregate(tests);
    result.train_metric = aggregate(trains);
    return result;
}

} // namespace han
