// sse: train, sample, prune, retrain, and evaluate sparse structured
// ensembles from the command line. Configuration comes from an optional flat
// key=value file plus flag overrides (flags win); every run appends
// line-oriented metrics records under the output directory.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sse/errors.hpp"
#include "sse/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> sets;                // repeated key=value pairs
    std::map<std::string, std::string> flags;     // per-key flag overrides
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_file, "flat key=value config file");
    sub->add_option("--set", args.sets, "override one key=value pair (repeatable)");
    for (const std::string& key : sse::ExperimentConfig::keys())
        sub->add_option_function<std::string>(
            "--" + key, [key, &args](const std::string& v) { args.flags[key] = v; },
            "config key " + key);
}

sse::ExperimentConfig build_config(const CommonArgs& args) {
    sse::ExperimentConfig cfg = args.config_file.empty()
                                    ? sse::ExperimentConfig{}
                                    : sse::ExperimentConfig::from_file(args.config_file);
    for (const std::string& pair : args.sets) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw sse::ConfigError("--set expects key=value, got '" + pair + "'");
        cfg.set(pair.substr(0, eq), pair.substr(eq + 1));
    }
    for (const auto& [key, value] : args.flags) cfg.set(key, value);
    return cfg;
}

void print_records(const std::vector<std::string>& records) {
    for (const std::string& line : records) std::cout << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse structured ensembles: SGLD sampling under group sparse priors, "
                 "per-sample pruning with retraining, and model-averaged evaluation"};
    app.require_subcommand(1);
    CommonArgs args;
    std::string manifest_flag;
    std::string metrics_flag;
    bool curve = false;

    CLI::App* train = app.add_subcommand("train-baseline", "MAP-train one model and save it");
    CLI::App* sample = app.add_subcommand("sample", "run the posterior sampler; save M members");
    CLI::App* prune = app.add_subcommand("prune-retrain",
                                         "prune every member, extract structure, retrain");
    CLI::App* eval = app.add_subcommand("eval", "model-averaged evaluation of a member manifest");
    CLI::App* report = app.add_subcommand("report", "render curve records to CSV and SVG");
    CLI::App* pipeline = app.add_subcommand("pipeline",
                                            "sample, eval, prune-retrain, eval, report");
    for (CLI::App* sub : {train, sample, prune, eval, report, pipeline}) add_common(sub, args);
    prune->add_option("--manifest", manifest_flag, "member manifest (default <out_dir>/manifest.json)");
    eval->add_option("--manifest", manifest_flag, "member manifest (default <out_dir>/manifest.json)");
    eval->add_flag("--curve", curve, "emit per-prefix member-count curve records");
    report->add_option("--metrics", metrics_flag, "metrics file (default <out_dir>/metrics.txt)");

    try {
        app.parse(argc, argv);
        const sse::ExperimentConfig cfg = build_config(args);
        const fs::path manifest = manifest_flag.empty()
                                      ? fs::path(cfg.out_dir) / "manifest.json"
                                      : fs::path(manifest_flag);
        const fs::path metrics = metrics_flag.empty() ? fs::path(cfg.out_dir) / "metrics.txt"
                                                      : fs::path(metrics_flag);
        if (train->parsed()) print_records(sse::cmd_train_baseline(cfg));
        else if (sample->parsed()) print_records(sse::cmd_sample(cfg));
        else if (prune->parsed()) print_records(sse::cmd_prune_retrain(cfg, manifest));
        else if (eval->parsed()) print_records(sse::cmd_eval(cfg, manifest, curve));
        else if (report->parsed()) print_records(sse::cmd_report(cfg, metrics));
        else if (pipeline->parsed()) print_records(sse::cmd_pipeline(cfg));
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const sse::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const sse::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 3;
    } catch (const sse::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
