// Exercises the shared-library C API surface: handles, error codes,
// last-error messages and JSON round trips.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "han/han_c.h"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

using nlohmann::json;

namespace {

// width-3, depth-2 pure-Householder model document
std::string pure_han_model_json() {
    json doc;
    doc["format_version"] = 1;
    doc["layers"] = json::array();
    for (int k = 0; k < 2; ++k) {
        json layer;
        layer["kind"] = "han";
        layer["in"] = 3;
        layer["out"] = 3;
        layer["act"] = "abs";
        layer["init"] = "han-unit";
        layer["u"] = {0.6, 0.8, 0.0};
        layer["b"] = {0.1 * (k + 1), -0.2, 0.3};
        doc["layers"].push_back(layer);
    }
    return doc.dump();
}

} // namespace

TEST_CASE("version and initial error state") {
    CHECK(hannet_version() != nullptr);
    CHECK(std::strlen(hannet_version()) > 0);
    CHECK(std::string(hannet_last_error()).empty());
}

TEST_CASE("catalog model lifecycle and metadata") {
    hannet_model* model = nullptr;
    REQUIRE(hannet_model_build("checkerboard-HanNet", 2, 2, 42, &model) == HANNET_OK);
    REQUIRE(model != nullptr);
    CHECK(hannet_model_input_dim(model) == 2);
    CHECK(hannet_model_output_dim(model) == 2);
    CHECK(hannet_model_param_count(model) == 3032);
    CHECK(hannet_model_activation_ratio(model) == doctest::Approx(600.0 / 3032.0));

    double x[2] = {0.25, -0.5};
    double y[2] = {0.0, 0.0};
    CHECK(hannet_model_forward(model, x, 2, y, 2) == HANNET_OK);
    CHECK(std::isfinite(y[0]));
    CHECK(std::isfinite(y[1]));

    // same seed rebuild gives the same forward values
    hannet_model* again = nullptr;
    REQUIRE(hannet_model_build("checkerboard-HanNet", 2, 2, 42, &again) == HANNET_OK);
    double y2[2] = {0.0, 0.0};
    CHECK(hannet_model_forward(again, x, 2, y2, 2) == HANNET_OK);
    CHECK(y[0] == y2[0]);
    CHECK(y[1] == y2[1]);
    hannet_model_free(again);
    hannet_model_free(model);
}

TEST_CASE("unknown architecture yields UNKNOWN_NAME and a message") {
    hannet_model* model = nullptr;
    CHECK(hannet_model_build("no-such-arch", 2, 2, 1, &model) == HANNET_ERROR_UNKNOWN_NAME);
    CHECK(model == nullptr);
    CHECK(std::string(hannet_last_error()).find("no-such-arch") != std::string::npos);
}

TEST_CASE("forward with wrong buffer lengths yields DIMENSION_MISMATCH") {
    hannet_model* model = nullptr;
    REQUIRE(hannet_model_build("checkerboard-FCNet1", 2, 2, 7, &model) == HANNET_OK);
    double x[3] = {0.0, 0.0, 0.0};
    double y[2] = {0.0, 0.0};
    CHECK(hannet_model_forward(model, x, 3, y, 2) == HANNET_ERROR_DIMENSION_MISMATCH);
    CHECK(std::strlen(hannet_last_error()) > 0);
    hannet_model_free(model);
}

TEST_CASE("null arguments are rejected as INVALID_ARGUMENT") {
    CHECK(hannet_model_build(nullptr, 2, 2, 1, nullptr) == HANNET_ERROR_INVALID_ARGUMENT);
    CHECK(hannet_experiment_run(nullptr, nullptr) == HANNET_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("model JSON and file round trips") {
    hannet_model* model = nullptr;
    REQUIRE(hannet_model_from_json(pure_han_model_json().c_str(), &model) == HANNET_OK);
    char* text = nullptr;
    REQUIRE(hannet_model_to_json(model, &text) == HANNET_OK);
    json doc = json::parse(text);
    CHECK(doc["format_version"] == 1);
    CHECK(doc["layers"].size() == 2);
    hannet_string_free(text);

    const char* path = "/tmp/hannet_capi_model.json";
    REQUIRE(hannet_model_save(model, path) == HANNET_OK);
    hannet_model* loaded = nullptr;
    REQUIRE(hannet_model_load(path, &loaded) == HANNET_OK);
    CHECK(hannet_model_param_count(loaded) == hannet_model_param_count(model));
    hannet_model_free(loaded);
    hannet_model_free(model);
    std::remove(path);

    hannet_model* bad = nullptr;
    CHECK(hannet_model_from_json("{\"format_version\":3}", &bad) == HANNET_ERROR_PARSE);
    CHECK(hannet_model_load("/no/such/file.json", &bad) == HANNET_ERROR_IO);
}

TEST_CASE("orthogonality certificate via the C API") {
    hannet_model* model = nullptr;
    REQUIRE(hannet_model_from_json(pure_han_model_json().c_str(), &model) == HANNET_OK);
    char* report_text = nullptr;
    REQUIRE(hannet_orthogonality_certificate(model, 25, 3, &report_text) == HANNET_OK);
    json report = json::parse(report_text);
    CHECK(report["depth"] == 2);
    CHECK(report["orspan"].get<double>() <= 1e-10);
    CHECK(report["sigma_min"].get<double>() >= 1.0 - 1e-10);
    CHECK(report["sigma_max"].get<double>() <= 1.0 + 1e-10);
    hannet_string_free(report_text);
    hannet_model_free(model);

    // a model with FC hidden layers is rejected as UNSUPPORTED
    hannet_model* fc_model = nullptr;
    REQUIRE(hannet_model_build("checkerboard-HanNet", 2, 2, 2, &fc_model) == HANNET_OK);
    char* unused = nullptr;
    CHECK(hannet_orthogonality_certificate(fc_model, 5, 3, &unused) ==
          HANNET_ERROR_UNSUPPORTED);
    hannet_model_free(fc_model);
}

TEST_CASE("dataset creation and accessors") {
    hannet_dataset* ds = nullptr;
    REQUIRE(hannet_dataset_checkerboard(12, 81, 0.25, 0.0, 9, &ds) == HANNET_OK);
    CHECK(hannet_dataset_train_count(ds) == 1640);
    CHECK(hannet_dataset_test_count(ds) == 6561 - 1640);
    CHECK(hannet_dataset_feature_dim(ds) == 2);
    CHECK(hannet_dataset_target_dim(ds) == 2);
    hannet_dataset_free(ds);

    hannet_dataset* missing = nullptr;
    CHECK(hannet_dataset_from_csv("/no/such.csv", -1, 0.8, 1, &missing) == HANNET_ERROR_IO);
}

TEST_CASE("training through the C API returns a run record") {
    hannet_dataset* ds = nullptr;
    REQUIRE(hannet_dataset_checkerboard(4, 15, 0.5, 0.0, 5, &ds) == HANNET_OK);
    hannet_model* model = nullptr;
    REQUIRE(hannet_model_build("checkerboard-HanNet", 2, 2, 11, &model) == HANNET_OK);
    const char* cfg = R"({
        "optimizer": {"kind": "sgd", "lr": 0.05, "iterations": 150, "batch_size": 50},
        "loss": "mse", "metric": "accuracy", "eval_every": 50, "shuffle_seed": 13
    })";
    char* record_text = nullptr;
    REQUIRE(hannet_train(model, ds, cfg, &record_text) == HANNET_OK);
    json record = json::parse(record_text);
    CHECK(record["failed"] == false);
    CHECK(record["iterations"] == 150);
    CHECK(record["series"].size() == 3);
    CHECK(record["final_train_metric"].get<double>() >= 0.0);
    hannet_string_free(record_text);
    hannet_model_free(model);
    hannet_dataset_free(ds);
}

TEST_CASE("experiments run through the C API") {
    const char* bad = R"({"experiment":"checkerboard","bogus":1,"dry_run":true})";
    CHECK(hannet_experiment_run(bad, nullptr) == HANNET_ERROR_PARSE);
    CHECK(std::string(hannet_last_error()).find("bogus") != std::string::npos);

    const char* dry = R"({"experiment":"variability","dry_run":true,"samples":3})";
    char* summary_text = nullptr;
    REQUIRE(hannet_experiment_run(dry, &summary_text) == HANNET_OK);
    json summary = json::parse(summary_text);
    CHECK(summary["dry_run"] == true);
    hannet_string_free(summary_text);
}
