// Experiment runner CLI. Links the hannet C API only; flags are merged over
// an optional JSON config file (flags win) and the merged config is handed
// to hannet_experiment_run.

#include "han/han_c.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool paper_protocol = false;
    bool dry_run = false;
    std::size_t threads = 0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file (flags override it)");
    cmd->add_option("--out", flags.out_dir, "Output directory for the results bundle");
    cmd->add_option("--seed", flags.seed, "Master seed");
    cmd->add_flag("--paper-protocol", flags.paper_protocol,
                  "Full protocol: the 10-rate grid and 5 seeds (default profile is reduced)");
    cmd->add_flag("--dry-run", flags.dry_run, "Validate and print the resolved config only");
    cmd->add_option("--threads", flags.threads, "Fan independent runs out over N workers");
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot open config file '" << path << "'\n";
        std::exit(2);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& e) {
        std::cerr << "error: config file '" << path << "': " << e.what() << "\n";
        std::exit(2);
    }
}

json base_config(const std::string& experiment, const CLI::App* cmd, const CommonFlags& flags) {
    json cfg = flags.config_path.empty() ? json::object() : load_config_file(flags.config_path);
    cfg["experiment"] = experiment;
    if (cmd->count("--out")) cfg["out_dir"] = flags.out_dir;
    if (cmd->count("--seed")) cfg["seed"] = flags.seed;
    if (flags.paper_protocol) cfg["profile"] = "paper";
    if (flags.dry_run) cfg["dry_run"] = true;
    if (cmd->count("--threads")) cfg["threads"] = flags.threads;
    return cfg;
}

int run_and_report(const json& cfg) {
    char* summary_text = nullptr;
    const hannet_status status = hannet_experiment_run(cfg.dump().c_str(), &summary_text);
    if (status != HANNET_OK) {
        std::cerr << "error: " << hannet_last_error() << "\n";
        return 1;
    }
    json summary = json::parse(summary_text);
    hannet_string_free(summary_text);
    if (summary.value("dry_run", false)) {
        std::cout << "config OK (dry run)\n" << summary["config"].dump(2) << "\n";
        return 0;
    }
    if (summary.contains("table")) std::cout << summary["table"].get<std::string>();
    if (cfg.contains("out_dir")) {
        std::cout << "\nresults bundle: " << cfg["out_dir"].get<std::string>() << "\n";
    }
    return 0;
}

int run_verify() {
    int32_t all_passed = 0;
    char* report_text = nullptr;
    const hannet_status status = hannet_verify_run(&all_passed, &report_text);
    if (status != HANNET_OK) {
        std::cerr << "error: " << hannet_last_error() << "\n";
        return 1;
    }
    json report = json::parse(report_text);
    hannet_string_free(report_text);
    std::size_t passed = 0;
    for (const auto& item : report) {
        const bool pass = item.at("pass").get<bool>();
        passed += pass ? 1 : 0;
        std::cout << (pass ? "PASS " : "FAIL ") << item.at("name").get<std::string>();
        const std::string detail = item.value("detail", std::string());
        if (!detail.empty()) std::cout << " - " << detail;
        std::cout << "\n";
    }
    std::cout << passed << "/" << report.size() << " properties passed\n";
    return all_passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("hannet experiment runner (library ") + hannet_version() + ")"};
    app.require_subcommand(1);

    // checkerboard -----------------------------------------------------
    CommonFlags cb_flags;
    std::vector<std::string> cb_archs;
    std::vector<double> cb_rates;
    std::size_t cb_seeds = 0, cb_iterations = 0, cb_eval_every = 0;
    auto* cb = app.add_subcommand("checkerboard",
                                  "Grid-search SGD protocol on the checkerboard dataset");
    add_common_flags(cb, cb_flags);
    cb->add_option("--arch", cb_archs, "Architecture subset (e.g. HanNet FCNet1)");
    cb->add_option("--rates", cb_rates, "Initial learning rates for the grid search");
    cb->add_option("--seeds", cb_seeds, "Number of seeds");
    cb->add_option("--iterations", cb_iterations, "SGD iterations per run");
    cb->add_option("--eval-every", cb_eval_every, "Evaluation cadence in iterations");

    // ablation ----------------------------------------------------------
    CommonFlags ab_flags;
    std::vector<std::string> ab_cells;
    auto* ab = app.add_subcommand("ablation",
                                  "Layer-type x activation ablation on the 20x30 frame");
    add_common_flags(ab, ab_flags);
    ab->add_option("--cells", ab_cells, "Cells to run (subset of a b c d)");

    // labelflip ----------------------------------------------------------
    CommonFlags lf_flags;
    std::vector<std::string> lf_archs;
    double lf_fraction = 0.10;
    auto* lf = app.add_subcommand("labelflip",
                                  "Checkerboard with a fraction of training labels flipped");
    add_common_flags(lf, lf_flags);
    lf->add_option("--arch", lf_archs, "Architecture subset");
    lf->add_option("--flip", lf_fraction, "Fraction of training labels to flip (default 0.10)");

    // regression ----------------------------------------------------------
    CommonFlags rg_flags;
    std::string rg_elevators, rg_cal_housing;
    std::vector<double> rg_splits;
    std::size_t rg_seeds = 0, rg_epochs = 0;
    auto* rg = app.add_subcommand("regression", "Adam protocol on tabular regression CSVs");
    add_common_flags(rg, rg_flags);
    rg->add_option("--elevators", rg_elevators, "Path to the Elevators CSV (16599 x 18)");
    rg->add_option("--cal-housing", rg_cal_housing, "Path to the Cal Housing CSV (20640 x 8)");
    rg->add_option("--splits", rg_splits, "Training fractions (default 0.8 0.2)");
    rg->add_option("--seeds", rg_seeds, "Number of seeds");
    rg->add_option("--epochs", rg_epochs, "Adam epochs (default 300)");

    // variability ----------------------------------------------------------
    CommonFlags va_flags;
    std::vector<std::string> va_families;
    std::vector<std::size_t> va_depths;
    std::size_t va_samples = 0, va_grid = 0, va_budget_fc = 0, va_budget_han = 0;
    auto* va = app.add_subcommand("variability",
                                  "Depth sweep of the third-derivative variability measure");
    add_common_flags(va, va_flags);
    va->add_option("--families", va_families, "Families (fc-relu fc-abs han)");
    va->add_option("--depths", va_depths, "Hidden-layer depths to sweep");
    va->add_option("--samples", va_samples, "Parameter samples per depth");
    va->add_option("--grid", va_grid, "Grid points per side (default 21)");
    va->add_option("--budget-fc", va_budget_fc, "FC parameter budget (default 4000)");
    va->add_option("--budget-han", va_budget_han, "Han parameter budget (default 800)");

    // landscape ----------------------------------------------------------
    CommonFlags ls_flags;
    std::vector<std::string> ls_families;
    std::size_t ls_depth = 0, ls_width = 0, ls_samples = 0, ls_grid = 0;
    auto* ls = app.add_subcommand("landscape", "Export output-surface grids over [-1,1]^2");
    add_common_flags(ls, ls_flags);
    ls->add_option("--families", ls_families, "Families (fc-relu fc-abs han)");
    ls->add_option("--depth", ls_depth, "Hidden layers (default 70)");
    ls->add_option("--width", ls_width, "Hidden width (default 10)");
    ls->add_option("--samples", ls_samples, "Parameter samples per family (default 4)");
    ls->add_option("--grid", ls_grid, "Grid points per side (default 41)");

    // verify ----------------------------------------------------------
    auto* vf = app.add_subcommand("verify", "Run the property suite; exit 0 iff all pass");

    CLI11_PARSE(app, argc, argv);

    if (vf->parsed()) return run_verify();

    if (cb->parsed()) {
        json cfg = base_config("checkerboard", cb, cb_flags);
        if (cb->count("--arch")) cfg["architectures"] = cb_archs;
        if (cb->count("--rates")) cfg["rates"] = cb_rates;
        if (cb->count("--seeds")) cfg["n_seeds"] = cb_seeds;
        if (cb->count("--iterations")) cfg["optimizer"]["iterations"] = cb_iterations;
        if (cb->count("--eval-every")) cfg["eval_every"] = cb_eval_every;
        return run_and_report(cfg);
    }
    if (ab->parsed()) {
        json cfg = base_config("ablation", ab, ab_flags);
        if (ab->count("--cells")) cfg["cells"] = ab_cells;
        return run_and_report(cfg);
    }
    if (lf->parsed()) {
        json cfg = base_config("labelflip", lf, lf_flags);
        if (lf->count("--arch")) cfg["architectures"] = lf_archs;
        if (lf->count("--flip")) cfg["dataset"]["label_flip_fraction"] = lf_fraction;
        return run_and_report(cfg);
    }
    if (rg->parsed()) {
        json cfg = base_config("regression", rg, rg_flags);
        if (!rg_elevators.empty() || !rg_cal_housing.empty()) {
            json datasets = json::array();
            if (!rg_elevators.empty()) {
                datasets.push_back({{"name", "elevators"},
                                    {"csv", rg_elevators},
                                    {"expected_rows", 16599},
                                    {"expected_dims", 18}});
            }
            if (!rg_cal_housing.empty()) {
                datasets.push_back({{"name", "cal_housing"},
                                    {"csv", rg_cal_housing},
                                    {"expected_rows", 20640},
                                    {"expected_dims", 8}});
            }
            cfg["datasets"] = datasets;
        }
        if (rg->count("--splits")) cfg["splits"] = rg_splits;
        if (rg->count("--seeds")) cfg["n_seeds"] = rg_seeds;
        if (rg->count("--epochs")) cfg["optimizer"]["epochs"] = rg_epochs;
        return run_and_report(cfg);
    }
    if (va->parsed()) {
        json cfg = base_config("variability", va, va_flags);
        if (va->count("--families")) cfg["families"] = va_families;
        if (va->count("--depths")) cfg["depths"] = va_depths;
        if (va->count("--samples")) cfg["samples"] = va_samples;
        if (va->count("--grid")) cfg["grid"] = va_grid;
        if (va->count("--budget-fc")) cfg["budget_fc"] = va_budget_fc;
        if (va->count("--budget-han")) cfg["budget_han"] = va_budget_han;
        return run_and_report(cfg);
    }
    if (ls->parsed()) {
        json cfg = base_config("landscape", ls, ls_flags);
        if (ls->count("--families")) cfg["families"] = ls_families;
        if (ls->count("--depth")) cfg["depth"] = ls_depth;
        if (ls->count("--width")) cfg["width"] = ls_width;
        if (ls->count("--samples")) cfg["samples"] = ls_samples;
        if (ls->count("--grid")) cfg["grid"] = ls_grid;
        return run_and_report(cfg);
    }
    return 0;
}
