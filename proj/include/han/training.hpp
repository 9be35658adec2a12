#pragma once

#include "han/data.hpp"
#include "han/network.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace han {

enum class LossKind { Mse, CrossEntropy };
enum class MetricKind { Accuracy, Nrmse };

struct SgdConfig {
    double lr{0.1};
    double momentum{0.9};
    double weight_decay{0.0};
    std::size_t batch_size{100};
    std::size_t iterations{40000};
    bool anneal{true};
};

struct AdamConfig {
    double lr{0.001};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    std::size_t batch_size{100};
    std::size_t epochs{300};
};

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind{Kind::Sgd};
    SgdConfig sgd;
    AdamConfig adam;
};

struct EvalPoint {
    std::size_t iteration;
    double train_loss;
    double train_metric;
    double test_metric;
};

struct RunRecord {
    std::string arch;
    std::uint64_t seed{0};
    double rate{0.0};
    std::vector<EvalPoint> series;
    double final_train_loss{0.0};
    double final_train_metric{0.0};
    double final_test_metric{0.0};
    double best_test_metric{0.0};
    std::size_t best_iteration{0};
    std::size_t iterations{0};
    bool failed{false};
    double wall_seconds{0.0};
};

/// Step-t learning rate: base divided by 5 for each of the thresholds
/// floor(T/2), floor(7T/10), floor(9T/10) that t has reached.
double anneal_schedule(double base_lr, std::size_t iterations, std::size_t t);

/// Momentum / Adam-moment buffers, shape-matched to the model parameters.
struct OptimizerState {
    Gradients velocity;        // SGD momentum or Adam first moment
    Gradients second_moment;   // Adam only
};

OptimizerState make_optimizer_state(const NetworkModel& model, OptimizerConfig::Kind kind);

/// Coupled weight decay: g <- g + wd p; v <- momentum v + g; p <- p - lr v.
void sgd_step(NetworkModel& model, const Gradients& grads, OptimizerState& state,
              const SgdConfig& cfg, double lr_now);

/// Bias-corrected Adam update; t counts steps from 1.
void adam_step(NetworkModel& model, const Gradients& grads, OptimizerState& state,
               const AdamConfig& cfg, std::size_t t);

struct TrainSettings {
    OptimizerConfig opt;
    LossKind loss{LossKind::Mse};
    MetricKind metric{MetricKind::Accuracy};
    NrmseNorm nrmse_norm{NrmseNorm::Std};
    /// Metrics are recorded every eval_every steps plus at the final step;
    /// 0 means once per epoch.
    std::size_t eval_every{500};
};

/// Mini-batch training with seeded shuffling without replacement (epochs
/// reshuffle on exhaustion). A non-finite batch loss marks the run failed
/// and stops it early with a partial record.
RunRecord train(NetworkModel& model, const DatasetSplit& data, const TrainSettings& settings,
                std::uint64_t shuffle_seed);

/// True when `candidate` improves on `incumbent` for the metric direction.
bool metric_improves(MetricKind metric, double candidate, double incumbent);

struct GridSearchResult {
    RunRecord best;
    std::vector<RunRecord> all;
};

/// Runs `run_at_rate` once per rate and selects the best finished run by
/// final test metric (or train metric when select_on_test is false). Failed
/// runs are kept in `all` but excluded from selection; if every run failed
/// the search throws Diverged.
GridSearchResult lr_grid_search(const std::function<RunRecord(double)>& run_at_rate,
                                const std::vector<double>& rates, MetricKind metric,
                                bool select_on_test = true);

/// The paper-protocol initial-rate grid.
const std::vector<double>& paper_rate_grid();

struct AggregateStats {
    double mean{0.0};
    double stddev{0.0};   // sample standard deviation; 0 when n = 1
};

AggregateStats aggregate(const std::vector<double>& values);

struct MultiSeedResult {
    std::vector<RunRecord> records;   // one per seed
    AggregateStats test_metric;
    AggregateStats train_metric;
};

/// Runs `run_at_seed` for n_seeds seeds derived deterministically from
/// master_seed and aggregates final metrics (mean +/- sample std).
MultiSeedResult multi_seed(const std::function<RunRecord(std::uint64_t)>& run_at_seed,
                           std::uint64_t master_seed, std::size_t n_seeds);

} // namespace han
