#include "han/han_c.h"

#include "han/analysis.hpp"
#include "han/data.hpp"
#include "han/error.hpp"
#include "han/experiments.hpp"
#include "han/network.hpp"
#include "han/training.hpp"
#include "han/verify.hpp"

#include <json.hpp>

#include <cstring>
#include <new>
#include <string>

struct hannet_model {
    han::NetworkModel impl;
};

struct hannet_dataset {
    han::DatasetSplit impl;
};

namespace {

thread_local std::string t_last_error;

hannet_status status_from(han::ErrorCode code) {
    return static_cast<hannet_status>(code);
}

char* copy_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
hannet_status guarded(Fn&& fn) {
    try {
        t_last_error.clear();
        fn();
        return HANNET_OK;
    } catch (const han::Error& e) {
        t_last_error = e.what();
        return status_from(e.code());
    } catch (const std::bad_alloc&) {
        t_last_error = "out of memory";
        return HANNET_ERROR_INTERNAL;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return HANNET_ERROR_INTERNAL;
    }
}

hannet_status invalid(const char* message) {
    t_last_error = message;
    return HANNET_ERROR_INVALID_ARGUMENT;
}

} // namespace

extern "C" {

const char* hannet_version(void) { return han::version(); }

const char* hannet_last_error(void) { return t_last_error.c_str(); }

void hannet_string_free(char* s) { delete[] s; }

/* ------------------------------------------------------------------ */

hannet_status hannet_model_build(const char* name, int32_t input_dim, int32_t output_dim,
                                 uint64_t seed, hannet_model** out_model) {
    if (!name || !out_model) return invalid("hannet_model_build: null argument");
    if (input_dim <= 0 || output_dim <= 0) {
        return invalid("hannet_model_build: dimensions must be positive");
    }
    return guarded([&] {
        han::Rng rng(seed);
        auto model = std::make_unique<hannet_model>();
        model->impl = han::build_named(name, static_cast<std::size_t>(input_dim),
                                       static_cast<std::size_t>(output_dim), rng);
        *out_model = model.release();
    });
}

hannet_status hannet_model_from_json(const char* json_text, hannet_model** out_model) {
    if (!json_text || !out_model) return invalid("hannet_model_from_json: null argument");
    return guarded([&] {
        auto model = std::make_unique<hannet_model>();
        model->impl = han::NetworkModel::from_json_text(json_text);
        *out_model = model.release();
    });
}

hannet_status hannet_model_to_json(const hannet_model* model, char** out_text) {
    if (!model || !out_text) return invalid("hannet_model_to_json: null argument");
    return guarded([&] { *out_text = copy_string(model->impl.to_json_text()); });
}

hannet_status hannet_model_save(const hannet_model* model, const char* path) {
    if (!model || !path) return invalid("hannet_model_save: null argument");
    return guarded([&] { model->impl.save(path); });
}

hannet_status hannet_model_load(const char* path, hannet_model** out_model) {
    if (!path || !out_model) return invalid("hannet_model_load: null argument");
    return guarded([&] {
        auto model = std::make_unique<hannet_model>();
        model->impl = han::NetworkModel::load(path);
        *out_model = model.release();
    });
}

void hannet_model_free(hannet_model* model) { delete model; }

int64_t hannet_model_input_dim(const hannet_model* model) {
    return model ? static_cast<int64_t>(model->impl.input_dim()) : -1;
}

int64_t hannet_model_output_dim(const hannet_model* model) {
    return model ? static_cast<int64_t>(model->impl.output_dim()) : -1;
}

int64_t hannet_model_param_count(const hannet_model* model) {
    return model ? static_cast<int64_t>(model->impl.param_count()) : -1;
}

double hannet_model_activation_ratio(const hannet_model* model) {
    return model ? model->impl.activation_ratio() : -1.0;
}

hannet_status hannet_model_forward(const hannet_model* model, const double* x, int64_t x_len,
                                   double* y_out, int64_t y_len) {
    if (!model || !x || !y_out) return invalid("hannet_model_forward: null argument");
    return guarded([&] {
        if (x_len != static_cast<int64_t>(model->impl.input_dim()) ||
            y_len != static_cast<int64_t>(model->impl.output_dim())) {
            han::fail(han::ErrorCode::DimensionMismatch,
                      "hannet_model_forward: buffer lengths do not match the model (" +
                          std::to_string(x_len) + " in, " + std::to_string(y_len) + " out)");
        }
        han::DenseVector xv(static_cast<std::size_t>(x_len));
        std::memcpy(xv.data.data(), x, sizeof(double) * xv.size());
        auto [y, tapes] = model->impl.forward(xv);
        (void)tapes;
        std::memcpy(y_out, y.data.data(), sizeof(double) * y.size());
    });
}

/* ------------------------------------------------------------------ */

hannet_status hannet_dataset_checkerboard(int32_t blocks, int32_t grid_points,
                                          double train_fraction, double label_flip_fraction,
                                          uint64_t seed, hannet_dataset** out_dataset) {
    if (!out_dataset) return invalid("hannet_dataset_checkerboard: null out pointer");
    if (blocks <= 0 || grid_points <= 1) {
        return invalid("hannet_dataset_checkerboard: blocks/grid_points out of range");
    }
    return guarded([&] {
        han::CheckerboardSpec spec;
        spec.blocks = static_cast<std::size_t>(blocks);
        spec.grid_points = static_cast<std::size_t>(grid_points);
        spec.train_fraction = train_fraction;
        spec.label_flip_fraction = label_flip_fraction;
        spec.seed = seed;
        auto ds = std::make_unique<hannet_dataset>();
        ds->impl = han::checkerboard_generate(spec);
        *out_dataset = ds.release();
    });
}

hannet_status hannet_dataset_from_csv(const char* path, int32_t target_column,
                                      double train_fraction, uint64_t seed,
                                      hannet_dataset** out_dataset) {
    if (!path || !out_dataset) return invalid("hannet_dataset_from_csv: null argument");
    return guarded([&] {
        han::RawTable table = han::load_regression_csv(path, target_column);
        auto ds = std::make_unique<hannet_dataset>();
        ds->impl = han::split_and_normalize(table, train_fraction, seed);
        *out_dataset = ds.release();
    });
}

void hannet_dataset_free(hannet_dataset* dataset) { delete dataset; }

int64_t hannet_dataset_train_count(const hannet_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->impl.X_train.cols) : -1;
}

int64_t hannet_dataset_test_count(const hannet_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->impl.X_test.cols) : -1;
}

int64_t hannet_dataset_feature_dim(const hannet_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->impl.X_train.rows) : -1;
}

int64_t hannet_dataset_target_dim(const hannet_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->impl.Y_train.rows) : -1;
}

/* ------------------------------------------------------------------ */

hannet_status hannet_train(hannet_model* model, const hannet_dataset* dataset,
                           const char* train_config_json, char** out_record_json) {
    if (!model || !dataset || !train_config_json) return invalid("hannet_train: null argument");
    return guarded([&] {
        nlohmann::json cfg;
        try {
            cfg = nlohmann::json::parse(train_config_json);
        } catch (const nlohmann::json::exception& e) {
            han::fail(han::ErrorCode::ParseError, std::string("train config: ") + e.what());
        }
        han::TrainSettings settings;
        const auto& opt = cfg.contains("optimizer") ? cfg.at("optimizer")
                                                    : nlohmann::json::object();
        const std::string kind = opt.value("kind", std::string("sgd"));
        if (kind == "sgd") {
            settings.opt.kind = han::OptimizerConfig::Kind::Sgd;
            settings.opt.sgd.lr = opt.value("lr", settings.opt.sgd.lr);
            settings.opt.sgd.momentum = opt.value("momentum", settings.opt.sgd.momentum);
            settings.opt.sgd.weight_decay =
                opt.value("weight_decay", settings.opt.sgd.weight_decay);
            settings.opt.sgd.batch_size = opt.value("batch_size", settings.opt.sgd.batch_size);
            settings.opt.sgd.iterations = opt.value("iterations", settings.opt.sgd.iterations);
            settings.opt.sgd.anneal = opt.value("anneal", settings.opt.sgd.anneal);
        } else if (kind == "adam") {
            settings.opt.kind = han::OptimizerConfig::Kind::Adam;
            settings.opt.adam.lr = opt.value("lr", settings.opt.adam.lr);
            settings.opt.adam.beta1 = opt.value("beta1", settings.opt.adam.beta1);
            settings.opt.adam.beta2 = opt.value("beta2", settings.opt.adam.beta2);
            settings.opt.adam.eps = opt.value("eps", settings.opt.adam.eps);
            settings.opt.adam.batch_size = opt.value("batch_size", settings.opt.adam.batch_size);
            settings.opt.adam.epochs = opt.value("epochs", settings.opt.adam.epochs);
        } else {
            han::fail(han::ErrorCode::ParseError, "train config: optimizer.kind must be sgd|adam");
        }
        const std::string loss = cfg.value("loss", std::string("mse"));
        if (loss == "mse") settings.loss = han::LossKind::Mse;
        else if (loss == "cross_entropy") settings.loss = han::LossKind::CrossEntropy;
        else han::fail(han::ErrorCode::ParseError, "train config: loss must be mse|cross_entropy");
        const std::string metric =
            cfg.value("metric", dataset->impl.classification ? std::string("accuracy")
                                                             : std::string("nrmse"));
        if (metric == "accuracy") settings.metric = han::MetricKind::Accuracy;
        else if (metric == "nrmse") settings.metric = han::MetricKind::Nrmse;
        else han::fail(han::ErrorCode::ParseError, "train config: metric must be accuracy|nrmse");
        settings.eval_every = cfg.value("eval_every", settings.eval_every);
        const std::uint64_t shuffle_seed = cfg.value("shuffle_seed", std::uint64_t{1});

        han::RunRecord rec = han::train(model->impl, dataset->impl, settings, shuffle_seed);
        if (out_record_json) {
            nlohmann::json j;
            j["seed"] = rec.seed;
            j["failed"] = rec.failed;
            j["iterations"] = rec.iterations;
            j["final_train_loss"] = rec.final_train_loss;
            j["final_train_metric"] = rec.final_train_metric;
            j["final_test_metric"] = rec.final_test_metric;
            j["best_test_metric"] = rec.best_test_metric;
            j["best_iteration"] = rec.best_iteration;
            j["wall_seconds"] = rec.wall_seconds;
            nlohmann::json series = nlohmann::json::array();
            for (const auto& pt : rec.series) {
                series.push_back({{"iteration", pt.iteration},
                                  {"train_loss", pt.train_loss},
                                  {"train_metric", pt.train_metric},
                                  {"test_metric", pt.test_metric}});
            }
            j["series"] = series;
            *out_record_json = copy_string(j.dump());
        }
    });
}

hannet_status hannet_orthogonality_certificate(const hannet_model* model, int32_t trials,
                                               uint64_t seed, char** out_report_json) {
    if (!model || !out_report_json) {
        return invalid("hannet_orthogonality_certificate: null argument");
    }
    if (trials <= 0) return invalid("hannet_orthogonality_certificate: trials must be positive");
    return guarded([&] {
        han::Rng rng(seed);
        han::GMatrixReport report = han::orthogonality_certificate(
            model->impl, static_cast<std::size_t>(trials), rng);
        nlohmann::json j;
        j["depth"] = report.depth;
        j["orspan"] = report.orspan;
        j["sigma_min"] = report.sigma_min;
        j["sigma_max"] = report.sigma_max;
        *out_report_json = copy_string(j.dump());
    });
}

/* ------------------------------------------------------------------ */

hannet_status hannet_experiment_run(const char* config_json, char** out_summary_json) {
    if (!config_json) return invalid("hannet_experiment_run: null config");
    return guarded([&] {
        std::string summary = han::run_experiment(config_json);
        if (out_summary_json) *out_summary_json = copy_string(summary);
    });
}

hannet_status hannet_verify_run(int32_t* out_all_passed, char** out_report_json) {
    return guarded([&] {
        auto results = han::run_property_suite();
        if (out_all_passed) *out_all_passed = han::all_passed(results) ? 1 : 0;
        if (out_report_json) {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : results) {
                j.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
            }
            *out_report_json = copy_string(j.dump());
        }
    });
}

} // extern "C"
