#include "han/experiments.hpp"

#include "han/analysis.hpp"
#include "han/data.hpp"
#include "han/error.hpp"
#include "han/network.hpp"
#include "han/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace han {

using nlohmann::json;

const char* version() { return "0.1.0"; }

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config plumbing.

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(ErrorCode::ParseError, "config: " + where + " must be an object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            fail(ErrorCode::ParseError, "config: unknown key '" + item.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorCode::ParseError, std::string("config: bad value for '") + key + "'");
    }
}

std::string format_rate(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", rate);
    return buf;
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct Profile {
    std::string name;
    std::vector<double> rates;
    std::size_t n_seeds;
    std::size_t variability_samples;
};

Profile resolve_profile(const std::string& name) {
    if (name == "paper") return {name, paper_rate_grid(), 5, 3000};
    if (name == "reduced") return {name, {0.005, 0.01, 0.025, 0.075}, 3, 300};
    // development profile: tiny but protocol-shaped
    if (name == "smoke") return {name, {0.01, 0.05}, 1, 60};
    fail(ErrorCode::ParseError, "config: unknown profile '" + name + "' (reduced|paper|smoke)");
}

struct CommonConfig {
    std::string experiment;
    std::uint64_t seed{1};
    std::string out_dir;
    bool dry_run{false};
    Profile profile;
    std::size_t threads{1};
};

// ---------------------------------------------------------------------------
// Bundle output.

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
    out << text;
    if (!out) fail(ErrorCode::IoError, "write failed for '" + path + "'");
}

json record_to_json(const RunRecord& rec) {
    json j;
    j["arch"] = rec.arch;
    j["seed"] = rec.seed;
    j["rate"] = rec.rate;
    j["iterations"] = rec.iterations;
    j["failed"] = rec.failed;
    j["final_train_loss"] = rec.final_train_loss;
    j["final_train_metric"] = rec.final_train_metric;
    j["final_test_metric"] = rec.final_test_metric;
    j["best_test_metric"] = rec.best_test_metric;
    j["best_iteration"] = rec.best_iteration;
    j["wall_seconds"] = rec.wall_seconds;
    j["eval_points"] = rec.series.size();
    return j;
}

std::string series_to_csv(const RunRecord& rec) {
    std::ostringstream out;
    out.precision(12);
    out << "iteration,train_loss,train_metric,test_metric\n";
    for (const auto& pt : rec.series) {
        out << pt.iteration << ',' << pt.train_loss << ',' << pt.train_metric << ','
            << pt.test_metric << '\n';
    }
    return out.str();
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size()) out << std::string(width[c] - row[c].size() + 2, ' ');
        }
        out << '\n';
    }
    return out.str();
}

// "depth x width" display label: hidden layers x modal hidden width.
std::string depth_width_label(const std::vector<LayerSpec>& spec) {
    std::size_t hidden = 0, width = 0;
    for (const auto& s : spec) {
        if (s.act == Activation::Identity) continue;
        ++hidden;
        width = std::max(width, s.out_width);
    }
    return std::to_string(hidden) + " x " + std::to_string(width);
}

// ---------------------------------------------------------------------------
// Job pool: deterministic result slots, worker count = config.threads.

void run_jobs(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t workers = std::min(threads, count);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// SGD grid/seed protocol shared by checkerboard, ablation and labelflip.

struct SgdProtocolConfig {
    CheckerboardSpec dataset;
    double momentum{0.9};
    double weight_decay{0.0};
    std::size_t batch_size{100};
    std::size_t iterations{40000};
    bool anneal{true};
    std::size_t eval_every{500};
    std::vector<double> rates;
    std::size_t n_seeds{3};
    bool select_on_test{true};
};

struct ArchOutcome {
    std::string arch;
    std::vector<LayerSpec> spec;
    MultiSeedResult seeds;                 // per-seed selected runs
    std::vector<RunRecord> all_runs;       // every (seed, rate) run
    AggregateStats best_metric;            // best-over-training test metric
    NetworkModel best_model;               // best selected run's model
    double best_model_metric{0.0};
};

struct SgdRunOutput {
    RunRecord record;
    NetworkModel model;
};

SgdRunOutput run_one_sgd(const std::string& arch, const DatasetSplit& data,
                         const SgdProtocolConfig& proto, std::uint64_t run_seed, double rate) {
    Rng init_rng(derive_seed(run_seed, 0));
    NetworkModel model = build_named(arch, data.X_train.rows, data.Y_train.rows, init_rng);
    TrainSettings settings;
    settings.opt.kind = OptimizerConfig::Kind::Sgd;
    settings.opt.sgd.lr = rate;
    settings.opt.sgd.momentum = proto.momentum;
    settings.opt.sgd.weight_decay = proto.weight_decay;
    settings.opt.sgd.batch_size = proto.batch_size;
    settings.opt.sgd.iterations = proto.iterations;
    settings.opt.sgd.anneal = proto.anneal;
    settings.loss = LossKind::Mse;
    settings.metric = MetricKind::Accuracy;
    settings.eval_every = proto.eval_every;
    SgdRunOutput out;
    out.record = train(model, data, settings, derive_seed(run_seed, 1));
    out.record.arch = arch;
    out.record.rate = rate;
    out.model = std::move(model);
    return out;
}

ArchOutcome run_sgd_protocol_for_arch(const std::string& arch, std::size_t arch_index,
                                      const DatasetSplit& data, const SgdProtocolConfig& proto,
                                      std::uint64_t master_seed, std::size_t threads,
                                      const std::function<void(std::size_t seed_index,
                                                               const RunRecord&)>& on_run_done) {
    ArchOutcome outcome;
    outcome.arch = arch;
    outcome.spec = catalog_spec(arch, data.X_train.rows, data.Y_train.rows);

    const std::size_t n_rates = proto.rates.size();
    const std::size_t n_jobs = proto.n_seeds * n_rates;
    std::vector<SgdRunOutput> results(n_jobs);
    std::mutex done_mutex;
    run_jobs(n_jobs, threads, [&](std::size_t i) {
        const std::size_t seed_index = i / n_rates;
        const std::size_t rate_index = i % n_rates;
        const std::uint64_t run_seed = derive_seed(master_seed, arch_index * 1009 + seed_index);
        results[i] = run_one_sgd(arch, data, proto, run_seed, proto.rates[rate_index]);
        results[i].record.seed = run_seed;
        std::lock_guard<std::mutex> lock(done_mutex);
        on_run_done(seed_index, results[i].record);
    });

    // per-seed grid selection, then seed aggregation
    std::vector<double> tests, trains, bests;
    bool have_best = false;
    for (std::size_t s = 0; s < proto.n_seeds; ++s) {
        std::vector<RunRecord> rate_runs;
        std::size_t best_rate_index = 0;
        bool found = false;
        for (std::size_t r = 0; r < n_rates; ++r) {
            const auto& rec = results[s * n_rates + r].record;
            rate_runs.push_back(rec);
            if (rec.failed) continue;
            if (!found) {
                found = true;
                best_rate_index = r;
                continue;
            }
            const auto& incumbent = results[s * n_rates + best_rate_index].record;
            const double candidate_v =
                proto.select_on_test ? rec.final_test_metric : rec.final_train_metric;
            const double incumbent_v = proto.select_on_test ? incumbent.final_test_metric
                                                            : incumbent.final_train_metric;
            if (metric_improves(MetricKind::Accuracy, candidate_v, incumbent_v)) {
                best_rate_index = r;
            }
        }
        for (auto& rec : rate_runs) outcome.all_runs.push_back(std::move(rec));
        if (!found) {
            fail(ErrorCode::Diverged, arch + ": every learning rate diverged for seed index " +
                                          std::to_string(s));
        }
        auto& chosen = results[s * n_rates + best_rate_index];
        outcome.seeds.records.push_back(chosen.record);
        tests.push_back(chosen.record.final_test_metric);
        trains.push_back(chosen.record.final_train_metric);
        bests.push_back(chosen.record.best_test_metric);
        if (!have_best ||
            chosen.record.final_test_metric > outcome.best_model_metric) {
            outcome.best_model = std::move(chosen.model);
            outcome.best_model_metric = chosen.record.final_test_metric;
            have_best = true;
        }
    }
    outcome.seeds.test_metric = aggregate(tests);
    outcome.seeds.train_metric = aggregate(trains);
    outcome.best_metric = aggregate(bests);
    return outcome;
}

// Full-mesh 0/1 prediction grid for Figure-1-style top views.
std::string prediction_grid_csv(const NetworkModel& model, const CheckerboardSpec& spec) {
    const std::size_t g = spec.grid_points;
    const double h = 2.0 / static_cast<double>(g - 1);
    DenseMatrix points(2, g * g);
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            points(0, i * g + j) = -1.0 + static_cast<double>(i) * h;
            points(1, i * g + j) = -1.0 + static_cast<double>(j) * h;
        }
    }
    DenseMatrix pred = model.predict(points);
    std::ostringstream out;
    out.precision(10);
    out << "x1,x2,predicted,label\n";
    for (std::size_t p = 0; p < g * g; ++p) {
        const int predicted = pred(1, p) > pred(0, p) ? 1 : 0;
        const int truth = checkerboard_label(points(0, p), points(1, p), spec.blocks);
        out << points(0, p) << ',' << points(1, p) << ',' << predicted << ',' << truth << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Experiment: checkerboard / ablation / labelflip.

CheckerboardSpec parse_checkerboard_dataset(const json& cfg, std::uint64_t master_seed,
                                            double default_flip) {
    CheckerboardSpec spec;
    spec.label_flip_fraction = default_flip;
    spec.seed = derive_seed(master_seed, 0xDA7A);
    if (cfg.contains("dataset")) {
        const auto& d = cfg.at("dataset");
        check_keys(d, "dataset",
                   {"blocks", "grid_points", "train_fraction", "label_flip_fraction", "seed"});
        spec.blocks = get_or<std::size_t>(d, "blocks", spec.blocks);
        spec.grid_points = get_or<std::size_t>(d, "grid_points", spec.grid_points);
        spec.train_fraction = get_or<double>(d, "train_fraction", spec.train_fraction);
        spec.label_flip_fraction = get_or<double>(d, "label_flip_fraction",
                                                  spec.label_flip_fraction);
        spec.seed = get_or<std::uint64_t>(d, "seed", spec.seed);
    }
    return spec;
}

SgdProtocolConfig parse_sgd_protocol(const json& cfg, const CommonConfig& common,
                                     double default_flip) {
    SgdProtocolConfig proto;
    proto.dataset = parse_checkerboard_dataset(cfg, common.seed, default_flip);
    proto.rates = common.profile.rates;
    proto.n_seeds = common.profile.n_seeds;
    if (cfg.contains("optimizer")) {
        const auto& o = cfg.at("optimizer");
        check_keys(o, "optimizer",
                   {"kind", "momentum", "weight_decay", "batch_size", "iterations", "anneal"});
        const std::string kind = get_or<std::string>(o, "kind", "sgd");
        if (kind != "sgd") {
            fail(ErrorCode::ParseError, "config: this experiment trains with SGD; got '" + kind +
                                            "'");
        }
        proto.momentum = get_or<double>(o, "momentum", proto.momentum);
        proto.weight_decay = get_or<double>(o, "weight_decay", proto.weight_decay);
        proto.batch_size = get_or<std::size_t>(o, "batch_size", proto.batch_size);
        proto.iterations = get_or<std::size_t>(o, "iterations", proto.iterations);
        proto.anneal = get_or<bool>(o, "anneal", proto.anneal);
    }
    proto.rates = get_or<std::vector<double>>(cfg, "rates", proto.rates);
    if (proto.rates.empty()) fail(ErrorCode::ParseError, "config: rates must be non-empty");
    proto.n_seeds = get_or<std::size_t>(cfg, "n_seeds", proto.n_seeds);
    if (proto.n_seeds == 0) fail(ErrorCode::ParseError, "config: n_seeds must be >= 1");
    proto.eval_every = get_or<std::size_t>(cfg, "eval_every", proto.eval_every);
    const std::string selection = get_or<std::string>(cfg, "selection", "test");
    if (selection != "test" && selection != "train") {
        fail(ErrorCode::ParseError, "config: selection must be 'test' or 'train'");
    }
    proto.select_on_test = selection == "test";
    return proto;
}

std::string qualify_arch(const std::string& name, const std::string& prefix) {
    if (name.rfind(prefix, 0) == 0 || name.rfind("ablation-", 0) == 0) return name;
    return prefix + name;
}

json sgd_protocol_snapshot(const SgdProtocolConfig& proto) {
    json j;
    j["dataset"] = {{"blocks", proto.dataset.blocks},
                    {"grid_points", proto.dataset.grid_points},
                    {"train_fraction", proto.dataset.train_fraction},
                    {"label_flip_fraction", proto.dataset.label_flip_fraction},
                    {"seed", proto.dataset.seed}};
    j["optimizer"] = {{"kind", "sgd"},         {"momentum", proto.momentum},
                      {"weight_decay", proto.weight_decay}, {"batch_size", proto.batch_size},
                      {"iterations", proto.iterations},     {"anneal", proto.anneal}};
    j["rates"] = proto.rates;
    j["n_seeds"] = proto.n_seeds;
    j["eval_every"] = proto.eval_every;
    j["selection"] = proto.select_on_test ? "test" : "train";
    return j;
}

struct BundleWriter {
    std::string dir;
    bool enabled{false};

    void init(const CommonConfig& common, const json& resolved) const {
        if (!enabled) return;
        ensure_dir(dir);
        ensure_dir(dir + "/runs");
        json snap = resolved;
        snap["version"] = version();
        snap["blas_backend"] = blas_backend_name();
        write_text(dir + "/config.json", snap.dump(2) + "\n");
        (void)common;
    }

    void write_run(const std::string& tag, const RunRecord& rec) const {
        if (!enabled) return;
        write_text(dir + "/runs/" + tag + ".json", record_to_json(rec).dump(2) + "\n");
        write_text(dir + "/runs/" + tag + "_series.csv", series_to_csv(rec));
    }

    void finish(const json& summary, const std::string& table_text) const {
        if (!enabled) return;
        write_text(dir + "/summary.json", summary.dump(2) + "\n");
        write_text(dir + "/summary.txt", table_text);
    }
};

json run_sgd_family_experiment(const json& cfg, const CommonConfig& common,
                               const std::vector<std::string>& archs,
                               const SgdProtocolConfig& proto, bool is_ablation) {
    const auto t_start = std::chrono::steady_clock::now();
    BundleWriter bundle{common.out_dir, !common.dry_run};

    json resolved;
    resolved["experiment"] = common.experiment;
    resolved["seed"] = common.seed;
    resolved["profile"] = common.profile.name;
    resolved["threads"] = common.threads;
    resolved["architectures"] = archs;
    resolved.update(sgd_protocol_snapshot(proto));
    (void)cfg;

    if (common.dry_run) {
        json out;
        out["dry_run"] = true;
        out["config"] = resolved;
        return out;
    }
    bundle.init(common, resolved);
    ensure_dir(common.out_dir + "/grids");

    DatasetSplit data = checkerboard_generate(proto.dataset);

    std::vector<ArchOutcome> outcomes;
    for (std::size_t a = 0; a < archs.size(); ++a) {
        auto on_done = [&](std::size_t seed_index, const RunRecord& rec) {
            bundle.write_run(archs[a] + "_s" + std::to_string(seed_index) + "_r" +
                                 format_rate(rec.rate),
                             rec);
        };
        outcomes.push_back(run_sgd_protocol_for_arch(archs[a], a, data, proto, common.seed,
                                                     common.threads, on_done));
        write_text(common.out_dir + "/grids/" + archs[a] + "_prediction_grid.csv",
                   prediction_grid_csv(outcomes.back().best_model, proto.dataset));
    }

    json rows = json::array();
    std::vector<std::vector<std::string>> table;
    if (is_ablation) {
        table.push_back({"cell", "layer type", "activation", "test acc (%)"});
    } else {
        table.push_back({"model", "depth x width", "params", "AR (%)", "train acc (%)",
                         "test acc (%)", "best test acc (%)"});
    }
    for (const auto& oc : outcomes) {
        json row;
        row["arch"] = oc.arch;
        row["depth_x_width"] = depth_width_label(oc.spec);
        row["param_count"] = param_count(oc.spec);
        row["activation_ratio_percent"] = activation_ratio(oc.spec) * 100.0;
        row["train_acc_mean"] = oc.seeds.train_metric.mean * 100.0;
        row["train_acc_std"] = oc.seeds.train_metric.stddev * 100.0;
        row["test_acc_mean"] = oc.seeds.test_metric.mean * 100.0;
        row["test_acc_std"] = oc.seeds.test_metric.stddev * 100.0;
        row["best_test_acc_mean"] = oc.best_metric.mean * 100.0;
        row["best_test_acc_std"] = oc.best_metric.stddev * 100.0;
        json selected = json::array();
        for (const auto& rec : oc.seeds.records) selected.push_back(rec.rate);
        row["selected_rates"] = selected;
        rows.push_back(row);
        if (is_ablation) {
            const char cell = oc.arch.back();
            const bool householder = cell == 'a' || cell == 'b';
            const bool abs_act = cell == 'a' || cell == 'c';
            table.push_back({std::string("(") + cell + ")", householder ? "H" : "FC",
                             abs_act ? "ABS" : "ReLU",
                             format_fixed(oc.seeds.test_metric.mean * 100.0, 2)});
        } else {
            table.push_back({oc.arch, depth_width_label(oc.spec),
                             std::to_string(param_count(oc.spec)),
                             format_fixed(activation_ratio(oc.spec) * 100.0, 2),
                             format_fixed(oc.seeds.train_metric.mean * 100.0, 2) + " +/- " +
                                 format_fixed(oc.seeds.train_metric.stddev * 100.0, 2),
                             format_fixed(oc.seeds.test_metric.mean * 100.0, 2) + " +/- " +
                                 format_fixed(oc.seeds.test_metric.stddev * 100.0, 2),
                             format_fixed(oc.best_metric.mean * 100.0, 2)});
        }
    }

    json summary;
    summary["experiment"] = common.experiment;
    summary["version"] = version();
    summary["blas_backend"] = blas_backend_name();
    summary["config"] = resolved;
    summary["rows"] = rows;
    summary["table"] = render_table(table);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    bundle.finish(summary, summary["table"].get<std::string>());
    return summary;
}

json cmd_checkerboard_like(const json& cfg, const CommonConfig& common, double default_flip,
                           std::vector<std::string> default_archs) {
    check_keys(cfg, "config",
               {"experiment", "seed", "out_dir", "dry_run", "profile", "threads", "architectures",
                "dataset", "optimizer", "rates", "n_seeds", "eval_every", "selection"});
    SgdProtocolConfig proto = parse_sgd_protocol(cfg, common, default_flip);
    std::vector<std::string> archs =
        get_or<std::vector<std::string>>(cfg, "architectures", default_archs);
    for (auto& a : archs) a = qualify_arch(a, "checkerboard-");
    for (const auto& a : archs) catalog_spec(a, 2, 2); // validate names up front
    return run_sgd_family_experiment(cfg, common, archs, proto, false);
}

json cmd_ablation(const json& cfg, const CommonConfig& common) {
    check_keys(cfg, "config",
               {"experiment", "seed", "out_dir", "dry_run", "profile", "threads", "cells",
                "dataset", "optimizer", "rates", "n_seeds", "eval_every", "selection"});
    SgdProtocolConfig proto = parse_sgd_protocol(cfg, common, 0.0);
    const std::vector<std::string> cells =
        get_or<std::vector<std::string>>(cfg, "cells", {"a", "b", "c", "d"});
    std::vector<std::string> archs;
    for (const auto& c : cells) {
        if (c != "a" && c != "b" && c != "c" && c != "d") {
            fail(ErrorCode::ParseError, "config: ablation cells are 'a'..'d', got '" + c + "'");
        }
        archs.push_back("ablation-" + c);
    }
    std::sort(archs.begin(), archs.end()); // output ordered (a)-(d)
    return run_sgd_family_experiment(cfg, common, archs, proto, true);
}

// ---------------------------------------------------------------------------
// Experiment: regression.

struct RegressionDatasetConfig {
    std::string name;
    std::string csv;
    int target_column{-1};
    std::size_t expected_rows{0};
    std::size_t expected_dims{0};
};

json cmd_regression(const json& cfg, const CommonConfig& common) {
    check_keys(cfg, "config",
               {"experiment", "seed", "out_dir", "dry_run", "profile", "threads", "datasets",
                "splits", "architectures", "optimizer", "n_seeds", "eval_every",
                "nrmse_denominator"});
    if (!cfg.contains("datasets") || !cfg.at("datasets").is_array() ||
        cfg.at("datasets").empty()) {
        fail(ErrorCode::ParseError, "config: regression needs a non-empty 'datasets' array");
    }
    std::vector<RegressionDatasetConfig> datasets;
    for (const auto& d : cfg.at("datasets")) {
        check_keys(d, "datasets[]", {"name", "csv", "target_column", "expected_rows",
                                     "expected_dims"});
        RegressionDatasetConfig rc;
        rc.name = get_or<std::string>(d, "name", "");
        rc.csv = get_or<std::string>(d, "csv", "");
        if (rc.name.empty() || rc.csv.empty()) {
            fail(ErrorCode::ParseError, "config: each dataset needs 'name' and 'csv'");
        }
        rc.target_column = get_or<int>(d, "target_column", -1);
        rc.expected_rows = get_or<std::size_t>(d, "expected_rows", 0);
        rc.expected_dims = get_or<std::size_t>(d, "expected_dims", 0);
        datasets.push_back(std::move(rc));
    }
    std::vector<double> splits = get_or<std::vector<double>>(cfg, "splits", {0.8, 0.2});
    std::vector<std::string> archs = get_or<std::vector<std::string>>(
        cfg, "architectures", {"HanNet", "FCNet1", "FCNet2"});
    for (auto& a : archs) a = qualify_arch(a, "regression-");

    AdamConfig adam;
    if (cfg.contains("optimizer")) {
        const auto& o = cfg.at("optimizer");
        check_keys(o, "optimizer", {"kind", "lr", "beta1", "beta2", "eps", "batch_size",
                                    "epochs"});
        const std::string kind = get_or<std::string>(o, "kind", "adam");
        if (kind != "adam") {
            fail(ErrorCode::ParseError, "config: regression trains with Adam; got '" + kind + "'");
        }
        adam.lr = get_or<double>(o, "lr", adam.lr);
        adam.beta1 = get_or<double>(o, "beta1", adam.beta1);
        adam.beta2 = get_or<double>(o, "beta2", adam.beta2);
        adam.eps = get_or<double>(o, "eps", adam.eps);
        adam.batch_size = get_or<std::size_t>(o, "batch_size", adam.batch_size);
        adam.epochs = get_or<std::size_t>(o, "epochs", adam.epochs);
    }
    const std::size_t n_seeds = get_or<std::size_t>(cfg, "n_seeds", common.profile.n_seeds);
    const std::size_t eval_every = get_or<std::size_t>(cfg, "eval_every", 0);
    const std::string denom = get_or<std::string>(cfg, "nrmse_denominator", "std");
    if (denom != "std" && denom != "range") {
        fail(ErrorCode::ParseError, "config: nrmse_denominator must be 'std' or 'range'");
    }

    json resolved;
    resolved["experiment"] = common.experiment;
    resolved["seed"] = common.seed;
    resolved["profile"] = common.profile.name;
    resolved["threads"] = common.threads;
    resolved["architectures"] = archs;
    resolved["splits"] = splits;
    resolved["n_seeds"] = n_seeds;
    resolved["eval_every"] = eval_every;
    resolved["nrmse_denominator"] = denom;
    resolved["optimizer"] = {{"kind", "adam"},       {"lr", adam.lr},
                             {"beta1", adam.beta1},  {"beta2", adam.beta2},
                             {"eps", adam.eps},      {"batch_size", adam.batch_size},
                             {"epochs", adam.epochs}};
    json jd = json::array();
    for (const auto& d : datasets) {
        jd.push_back({{"name", d.name},
                      {"csv", d.csv},
                      {"target_column", d.target_column},
                      {"expected_rows", d.expected_rows},
                      {"expected_dims", d.expected_dims}});
    }
    resolved["datasets"] = jd;

    if (common.dry_run) {
        json out;
        out["dry_run"] = true;
        out["config"] = resolved;
        return out;
    }

    const auto t_start = std::chrono::steady_clock::now();
    BundleWriter bundle{common.out_dir, true};
    bundle.init(common, resolved);

    json rows = json::array();
    std::vector<std::vector<std::string>> table;
    table.push_back({"dataset", "split", "model", "params", "AR (%)", "test NRMSE",
                     "best NRMSE"});

    for (std::size_t di = 0; di < datasets.size(); ++di) {
        const auto& dcfg = datasets[di];
        RawTable raw = load_regression_csv(dcfg.csv, dcfg.target_column, dcfg.expected_rows,
                                           dcfg.expected_dims);
        for (std::size_t si = 0; si < splits.size(); ++si) {
            const double fraction = splits[si];
            DatasetSplit data = split_and_normalize(
                raw, fraction, derive_seed(common.seed, 0xD000 + di * 16 + si));
            for (std::size_t ai = 0; ai < archs.size(); ++ai) {
                const auto& arch = archs[ai];
                const auto spec = catalog_spec(arch, data.X_train.rows, 1);
                std::vector<RunRecord> records(n_seeds);
                run_jobs(n_seeds, common.threads, [&](std::size_t k) {
                    const std::uint64_t run_seed =
                        derive_seed(common.seed, (di * 8 + si) * 1024 + ai * 64 + k);
                    Rng init_rng(derive_seed(run_seed, 0));
                    NetworkModel model = NetworkModel::build(spec, init_rng);
                    TrainSettings settings;
                    settings.opt.kind = OptimizerConfig::Kind::Adam;
                    settings.opt.adam = adam;
                    settings.loss = LossKind::Mse;
                    settings.metric = MetricKind::Nrmse;
                    settings.nrmse_norm = denom == "std" ? NrmseNorm::Std : NrmseNorm::Range;
                    settings.eval_every = eval_every;
                    RunRecord rec = train(model, data, settings, derive_seed(run_seed, 1));
                    rec.arch = arch;
                    rec.seed = run_seed;
                    records[k] = std::move(rec);
                });
                std::vector<double> tests, bests;
                json seed_rows = json::array();
                for (std::size_t k = 0; k < n_seeds; ++k) {
                    const std::string tag = dcfg.name + "_split" + format_rate(fraction) + "_" +
                                            arch + "_s" + std::to_string(k);
                    bundle.write_run(tag, records[k]);
                    seed_rows.push_back(record_to_json(records[k]));
                    if (!records[k].failed) {
                        tests.push_back(records[k].final_test_metric);
                        bests.push_back(records[k].best_test_metric);
                    }
                }
                if (tests.empty()) {
                    fail(ErrorCode::Diverged, arch + " diverged on every seed (" + dcfg.name +
                                                  ", split " + format_rate(fraction) + ")");
                }
                const AggregateStats test_stats = aggregate(tests);
                const AggregateStats best_stats = aggregate(bests);
                json row;
                row["dataset"] = dcfg.name;
                row["split"] = fraction;
                row["arch"] = arch;
                row["depth_x_width"] = depth_width_label(spec);
                row["param_count"] = param_count(spec);
                row["activation_ratio_percent"] = activation_ratio(spec) * 100.0;
                row["test_nrmse_mean"] = test_stats.mean;
                row["test_nrmse_std"] = test_stats.stddev;
                row["best_nrmse_mean"] = best_stats.mean;
                row["best_nrmse_std"] = best_stats.stddev;
                row["runs"] = seed_rows;
                rows.push_back(row);
                table.push_back({dcfg.name, format_rate(fraction), arch,
                                 std::to_string(param_count(spec)),
                                 format_fixed(activation_ratio(spec) * 100.0, 2),
                                 format_fixed(test_stats.mean, 4) + " +/- " +
                                     format_fixed(test_stats.stddev, 4),
                                 format_fixed(best_stats.mean, 4)});
            }
        }
    }

    json summary;
    summary["experiment"] = common.experiment;
    summary["version"] = version();
    summary["blas_backend"] = blas_backend_name();
    summary["config"] = resolved;
    summary["rows"] = rows;
    summary["table"] = render_table(table);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    bundle.finish(summary, summary["table"].get<std::string>());
    return summary;
}

// ---------------------------------------------------------------------------
// Experiment: variability sweep.

json cmd_variability(const json& cfg, const CommonConfig& common) {
    check_keys(cfg, "config",
               {"experiment", "seed", "out_dir", "dry_run", "profile", "threads", "families",
                "depths", "samples", "grid", "budget_fc", "budget_han", "per_depth_budgets",
                "scalar_field"});
    const std::vector<std::string> families =
        get_or<std::vector<std::string>>(cfg, "families", {"fc-relu", "fc-abs", "han"});
    std::vector<std::size_t> depths =
        get_or<std::vector<std::size_t>>(cfg, "depths", {5, 10, 15, 20, 25, 27, 30, 35, 40, 45});
    const std::size_t samples =
        get_or<std::size_t>(cfg, "samples", common.profile.variability_samples);
    const std::size_t grid = get_or<std::size_t>(cfg, "grid", 21);
    const std::size_t budget_fc = get_or<std::size_t>(cfg, "budget_fc", 4000);
    const std::size_t budget_han = get_or<std::size_t>(cfg, "budget_han", 800);
    const std::string field_name = get_or<std::string>(cfg, "scalar_field", "mean");
    ScalarField field = ScalarField::MeanOutputs;
    if (field_name == "sum") field = ScalarField::SumOutputs;
    else if (field_name == "first") field = ScalarField::FirstOutput;
    else if (field_name != "mean") {
        fail(ErrorCode::ParseError, "config: scalar_field must be mean|sum|first");
    }
    json per_depth = cfg.contains("per_depth_budgets") ? cfg.at("per_depth_budgets")
                                                       : json::object();

    auto budget_for = [&](const std::string& family, std::size_t depth) -> std::size_t {
        if (per_depth.contains(family)) {
            const auto key = std::to_string(depth);
            if (per_depth.at(family).contains(key)) {
                return per_depth.at(family).at(key).get<std::size_t>();
            }
        }
        return family == "han" ? budget_han : budget_fc;
    };

    json resolved;
    resolved["experiment"] = common.experiment;
    resolved["seed"] = common.seed;
    resolved["profile"] = common.profile.name;
    resolved["families"] = families;
    resolved["depths"] = depths;
    resolved["samples"] = samples;
    resolved["grid"] = grid;
    resolved["budget_fc"] = budget_fc;
    resolved["budget_han"] = budget_han;
    resolved["per_depth_budgets"] = per_depth;
    resolved["scalar_field"] = field_name;

    if (common.dry_run) {
        json out;
        out["dry_run"] = true;
        out["config"] = resolved;
        return out;
    }

    const auto t_start = std::chrono::steady_clock::now();
    BundleWriter bundle{common.out_dir, true};
    bundle.init(common, resolved);
    ensure_dir(common.out_dir + "/variability");

    json rows = json::array();
    std::vector<std::vector<std::string>> table;
    table.push_back({"family", "depth", "width", "params", "geomean V", "collapsed"});
    std::ostringstream csv;
    csv << "family,depth,width,param_count,samples,collapsed,geomean_V\n";

    struct Cell {
        std::string family;
        std::size_t depth, width, params;
        VariabilityEstimate est;
    };
    std::vector<Cell> cells(families.size() * depths.size());
    run_jobs(cells.size(), common.threads, [&](std::size_t i) {
        const std::string& family = families[i / depths.size()];
        const std::size_t depth = depths[i % depths.size()];
        const LayerKind kind = family == "han" ? LayerKind::Han : LayerKind::Fc;
        const std::size_t width = width_for_budget(depth, budget_for(family, depth), 2, 2, kind);
        const auto spec = family_spec(family, depth, width, 2, 2);
        Rng cell_rng(derive_seed(common.seed, 0xF00 + (i / depths.size()) * 101 +
                                                  (i % depths.size())));
        Cell cell;
        cell.family = family;
        cell.depth = depth;
        cell.width = width;
        cell.params = param_count(spec);
        cell.est = variability([&spec](Rng& r) { return NetworkModel::build(spec, r); }, samples,
                               grid, cell_rng, field);
        cells[i] = std::move(cell);
    });

    for (const auto& cell : cells) {
        std::size_t collapsed = 0;
        for (double v : cell.est.per_sample) {
            if (v < 1e-250) ++collapsed;
        }
        json row;
        row["family"] = cell.family;
        row["depth"] = cell.depth;
        row["width"] = cell.width;
        row["param_count"] = cell.params;
        row["samples"] = cell.est.sample_count;
        row["collapsed_samples"] = collapsed;
        row["geometric_mean_V"] = cell.est.geometric_mean;
        rows.push_back(row);
        table.push_back({cell.family, std::to_string(cell.depth), std::to_string(cell.width),
                         std::to_string(cell.params),
                         format_rate(cell.est.geometric_mean), std::to_string(collapsed)});
        csv << cell.family << ',' << cell.depth << ',' << cell.width << ',' << cell.params << ','
            << cell.est.sample_count << ',' << collapsed << ',' << cell.est.geometric_mean
            << '\n';
        std::ostringstream per_sample;
        per_sample << "rank,V\n";
        per_sample.precision(12);
        for (std::size_t r = 0; r < cell.est.per_sample.size(); ++r) {
            per_sample << r << ',' << cell.est.per_sample[r] << '\n';
        }
        write_text(common.out_dir + "/variability/" + cell.family + "_depth" +
                       std::to_string(cell.depth) + "_samples.csv",
                   per_sample.str());
    }
    write_text(common.out_dir + "/variability/variability.csv", csv.str());

    json summary;
    summary["experiment"] = common.experiment;
    summary["version"] = version();
    summary["blas_backend"] = blas_backend_name();
    summary["config"] = resolved;
    summary["rows"] = rows;
    summary["table"] = render_table(table);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    bundle.finish(summary, summary["table"].get<std::string>());
    return summary;
}

// ---------------------------------------------------------------------------
// Experiment: landscape export.

json cmd_landscape(const json& cfg, const CommonConfig& common) {
    check_keys(cfg, "config", {"experiment", "seed", "out_dir", "dry_run", "profile", "threads",
                               "families", "depth", "width", "samples", "grid", "scalar_field"});
    const std::vector<std::string> families =
        get_or<std::vector<std::string>>(cfg, "families", {"fc-relu", "fc-abs", "han"});
    const std::size_t depth = get_or<std::size_t>(cfg, "depth", 70);
    const std::size_t width = get_or<std::size_t>(cfg, "width", 10);
    const std::size_t samples = get_or<std::size_t>(cfg, "samples", 4);
    const std::size_t grid = get_or<std::size_t>(cfg, "grid", 41);
    const std::string field_name = get_or<std::string>(cfg, "scalar_field", "mean");
    ScalarField field = ScalarField::MeanOutputs;
    if (field_name == "sum") field = ScalarField::SumOutputs;
    else if (field_name == "first") field = ScalarField::FirstOutput;
    else if (field_name != "mean") {
        fail(ErrorCode::ParseError, "config: scalar_field must be mean|sum|first");
    }

    json resolved;
    resolved["experiment"] = common.experiment;
    resolved["seed"] = common.seed;
    resolved["families"] = families;
    resolved["depth"] = depth;
    resolved["width"] = width;
    resolved["samples"] = samples;
    resolved["grid"] = grid;
    resolved["scalar_field"] = field_name;

    if (common.dry_run) {
        json out;
        out["dry_run"] = true;
        out["config"] = resolved;
        return out;
    }

    const auto t_start = std::chrono::steady_clock::now();
    BundleWriter bundle{common.out_dir, true};
    bundle.init(common, resolved);
    ensure_dir(common.out_dir + "/landscape");

    json rows = json::array();
    std::vector<std::vector<std::string>> table;
    table.push_back({"family", "sample", "min f", "max f", "rough (%)"});
    const double h = 2.0 / static_cast<double>(grid - 1);
    for (std::size_t fi = 0; fi < families.size(); ++fi) {
        const auto spec = family_spec(families[fi], depth, width, 2, 2);
        for (std::size_t k = 0; k < samples; ++k) {
            Rng rng(derive_seed(common.seed, 0x1A5D + fi * 64 + k));
            NetworkModel model = NetworkModel::build(spec, rng);
            DenseMatrix F = landscape_grid(model, grid, field);
            double lo = F.data[0], hi = F.data[0];
            std::size_t rough = 0, pairs = 0;
            for (std::size_t j = 0; j < grid; ++j) {
                for (std::size_t i = 0; i < grid; ++i) {
                    lo = std::min(lo, F(i, j));
                    hi = std::max(hi, F(i, j));
                    if (i + 1 < grid) {
                        ++pairs;
                        if (std::abs(F(i + 1, j) - F(i, j)) > 1e-3) ++rough;
                    }
                    if (j + 1 < grid) {
                        ++pairs;
                        if (std::abs(F(i, j + 1) - F(i, j)) > 1e-3) ++rough;
                    }
                }
            }
            const double rough_pct =
                100.0 * static_cast<double>(rough) / static_cast<double>(pairs);
            std::ostringstream out;
            out.precision(12);
            out << "x1,x2,f\n";
            for (std::size_t j = 0; j < grid; ++j) {
                for (std::size_t i = 0; i < grid; ++i) {
                    out << (-1.0 + static_cast<double>(i) * h) << ','
                        << (-1.0 + static_cast<double>(j) * h) << ',' << F(i, j) << '\n';
                }
            }
            const std::string file = families[fi] + "_sample" + std::to_string(k) + ".csv";
            write_text(common.out_dir + "/landscape/" + file, out.str());
            json row;
            row["family"] = families[fi];
            row["sample"] = k;
            row["file"] = "landscape/" + file;
            row["min_f"] = lo;
            row["max_f"] = hi;
            row["rough_fraction_percent"] = rough_pct;
            rows.push_back(row);
            table.push_back({families[fi], std::to_string(k), format_rate(lo), format_rate(hi),
                             format_fixed(rough_pct, 1)});
        }
    }

    json summary;
    summary["experiment"] = common.experiment;
    summary["version"] = version();
    summary["blas_backend"] = blas_backend_name();
    summary["config"] = resolved;
    summary["rows"] = rows;
    summary["table"] = render_table(table);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    bundle.finish(summary, summary["table"].get<std::string>());
    return summary;
}

} // namespace

std::string run_experiment(const std::string& config_json) {
    json cfg;
    try {
        cfg = json::parse(config_json);
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    if (!cfg.is_object() || !cfg.contains("experiment")) {
        fail(ErrorCode::ParseError, "config: missing 'experiment'");
    }

    CommonConfig common;
    common.experiment = cfg.at("experiment").get<std::string>();
    common.seed = get_or<std::uint64_t>(cfg, "seed", 1);
    common.dry_run = get_or<bool>(cfg, "dry_run", false);
    common.out_dir = get_or<std::string>(cfg, "out_dir", "");
    common.profile = resolve_profile(get_or<std::string>(cfg, "profile", "reduced"));
    common.threads = get_or<std::size_t>(cfg, "threads", 1);
    if (!common.dry_run && common.out_dir.empty()) {
        fail(ErrorCode::InvalidArgument, "config: out_dir is required (or set dry_run)");
    }

    json summary;
    if (common.experiment == "checkerboard") {
        // both readings of the 20x30 HanNet run by default: the table-row
        // reading (3032 parameters) and the natural first/last-FC reading
        // (2162); summaries report the two side by side
        summary = cmd_checkerboard_like(cfg, common, 0.0,
                                        {"checkerboard-FCNet1", "checkerboard-FCNet2",
                                         "checkerboard-FCNet3", "checkerboard-HanNet",
                                         "checkerboard-HanNet-18han"});
    } else if (common.experiment == "labelflip") {
        summary = cmd_checkerboard_like(cfg, common, 0.10,
                                        {"checkerboard-HanNet", "checkerboard-HanNet-18han",
                                         "checkerboard-FCNet1"});
    } else if (common.experiment == "ablation") {
        summary = cmd_ablation(cfg, common);
    } else if (common.experiment == "regression") {
        summary = cmd_regression(cfg, common);
    } else if (common.experiment == "variability") {
        summary = cmd_variability(cfg, common);
    } else if (common.experiment == "landscape") {
        summary = cmd_landscape(cfg, common);
    } else {
        fail(ErrorCode::UnknownName, "unknown experiment '" + common.experiment + "'");
    }
    return summary.dump(2);
}

} // namespace han
