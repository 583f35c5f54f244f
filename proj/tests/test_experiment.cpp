#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sse/container.hpp"
#include "sse/errors.hpp"
#include "sse/experiment.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using sse::testing::find_record;
using sse::testing::parse_record;

namespace {

fs::path temp_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "sse_experiment_tests" / leaf;
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

/// Sets (or clears, when value is nullptr) an environment variable for the
/// lifetime of the guard and restores the previous state afterwards.
struct EnvVarGuard {
    EnvVarGuard(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) previous_ = old;
        if (value)
            ::setenv(name, value, 1);
        else
            ::unsetenv(name);
    }
    ~EnvVarGuard() {
        if (previous_)
            ::setenv(name_.c_str(), previous_->c_str(), 1);
        else
            ::unsetenv(name_.c_str());
    }

  private:
    std::string name_;
    std::optional<std::string> previous_;
};

/// Tiny 8x8 three-class classification run: 2 posterior samples, prune to
/// half sparsity, short masked retrain.
sse::ExperimentConfig micro_fnn_config(const fs::path& data_dir, const fs::path& out_dir) {
    sse::ExperimentConfig cfg;
    cfg.model = "fnn";
    cfg.dataset = "mnist";
    cfg.fnn_dims = {64, 16, 3};
    const auto train = sse::testing::write_synthetic_mnist(data_dir, "train", 120, 21, 8, 8, 3);
    const auto test = sse::testing::write_synthetic_mnist(data_dir, "test", 60, 22, 8, 8, 3);
    cfg.train_images = train.first.string();
    cfg.train_labels = train.second.string();
    cfg.test_images = test.first.string();
    cfg.test_labels = test.second.string();
    cfg.strategy = "fnn-outgoing";
    cfg.lambda = 1e-3;
    cfg.step_size = 0.05;
    cfg.clip_norm = 5.0;
    cfg.batch_size = 30;
    cfg.epochs = 6;
    cfg.burn_in = 2;
    cfg.num_samples = 2;
    cfg.seed = 77;
    cfg.sparsity = 0.5;
    cfg.retrain_epochs = 2;
    cfg.retrain_lr = 0.05;
    cfg.out_dir = out_dir.string();
    return cfg;
}

sse::ExperimentConfig micro_lm_config(const fs::path& data_dir, const fs::path& out_dir,
                                      const std::string& strategy) {
    sse::ExperimentConfig cfg;
    cfg.model = "lstm";
    cfg.dataset = "text";
    const fs::path train = data_dir / "train.txt";
    const fs::path test = data_dir / "test.txt";
    sse::testing::write_text_file(train, sse::testing::make_synthetic_text(2500, 30, 11));
    sse::testing::write_text_file(test, sse::testing::make_synthetic_text(800, 30, 13));
    cfg.train_text = train.string();
    cfg.test_text = test.string();
    cfg.emb_dim = 8;
    cfg.hidden = {8};
    cfg.shared_embedding = false;
    cfg.init_range = 0.1;
    cfg.bptt = 4;
    cfg.strategy = strategy;
    cfg.lambda = 1e-4;
    cfg.step_size = 0.3;
    cfg.clip_norm = 5.0;
    cfg.batch_size = 8;
    cfg.epochs = 4;
    cfg.burn_in = 1;
    cfg.num_samples = 2;
    cfg.seed = 41;
    cfg.sparsity = 0.4;
    cfg.retrain_epochs = 2;
    cfg.retrain_lr = 0.2;
    cfg.out_dir = out_dir.string();
    return cfg;
}

}  // namespace

TEST_CASE("every documented config key is assignable, unknown keys are not") {
    sse::ExperimentConfig cfg;
    for (const std::string& key : sse::ExperimentConfig::keys()) {
        CAPTURE(key);
        CHECK_NOTHROW(cfg.set(key, "1"));
    }
    CHECK_THROWS_WITH_AS(cfg.set("banana", "1"), doctest::Contains("unknown config key"),
                         sse::ConfigError);
    CHECK_THROWS_AS(cfg.set("epochs", "ten"), sse::ConfigError);
    CHECK_THROWS_AS(cfg.set("step_size", "fast"), sse::ConfigError);
    CHECK_THROWS_AS(cfg.set("anneal", "maybe"), sse::ConfigError);
    CHECK_THROWS_AS(cfg.set("hidden", ""), sse::ConfigError);
    CHECK_THROWS_AS(cfg.set("epochs", "12x"), sse::ConfigError);
}

TEST_CASE("config files accept comments, blank lines, and whitespace") {
    const fs::path dir = temp_dir("config_files");
    const fs::path good = dir / "good.conf";
    sse::testing::write_text_file(good,
                                  "# a full-line comment\n"
                                  "\n"
                                  "model = fnn\n"
                                  "  epochs =  12   # trailing comment\n"
                                  "fnn_dims = 64, 16, 3\n"
                                  "step_size=0.25\n");
    const sse::ExperimentConfig cfg = sse::ExperimentConfig::from_file(good);
    CHECK(cfg.model == "fnn");
    CHECK(cfg.epochs == 12);
    CHECK(cfg.fnn_dims == std::vector<std::size_t>{64, 16, 3});
    CHECK(cfg.step_size == 0.25);

    const fs::path bad = dir / "bad.conf";
    sse::testing::write_text_file(bad, "model = fnn\nepochs 12\n");
    CHECK_THROWS_WITH_AS(sse::ExperimentConfig::from_file(bad), doctest::Contains(":2:"),
                         sse::ConfigError);
    CHECK_THROWS_WITH_AS(sse::ExperimentConfig::from_file(dir / "missing.conf"),
                         doctest::Contains("cannot open config file"), sse::IoError);
}

TEST_CASE("the provenance hash tracks experiment identity, not artifact placement") {
    sse::ExperimentConfig a;
    const std::string base = a.hash();
    CHECK(base.size() == 16);
    CHECK(base.find_first_not_of("0123456789abcdef") == std::string::npos);

    sse::ExperimentConfig b = a;
    b.out_dir = "somewhere/else";
    b.jobs = 8;
    CHECK(b.hash() == base);
    CHECK(b.canonical() == a.canonical());
    CHECK(a.canonical().find("out_dir") == std::string::npos);
    CHECK(a.canonical().find("jobs") == std::string::npos);

    sse::ExperimentConfig c = a;
    c.seed = 999;
    CHECK(c.hash() != base);
    sse::ExperimentConfig d = a;
    d.lambda = 0.125;
    CHECK(d.hash() != base);
    sse::ExperimentConfig e = a;
    e.strategy = "lstm-tied";
    CHECK(e.hash() != base);
}

TEST_CASE("validation rejects inconsistent experiment descriptions") {
    const auto invalid = [](auto&& mutate) {
        sse::ExperimentConfig cfg;  // defaults are a valid fnn/mnist pairing
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), sse::ConfigError);
    };
    CHECK_NOTHROW(sse::ExperimentConfig{}.validate());
    invalid([](sse::ExperimentConfig& c) { c.model = "cnn"; });
    invalid([](sse::ExperimentConfig& c) { c.dataset = "text"; });
    invalid([](sse::ExperimentConfig& c) { c.strategy = "lstm-tied"; });
    invalid([](sse::ExperimentConfig& c) { c.strategy = "banana"; });
    invalid([](sse::ExperimentConfig& c) { c.fnn_dims = {784}; });
    invalid([](sse::ExperimentConfig& c) { c.fnn_dims = {784, 0, 10}; });
    invalid([](sse::ExperimentConfig& c) { c.sparsity = 1.0; });
    invalid([](sse::ExperimentConfig& c) { c.sparsity = -0.1; });
    invalid([](sse::ExperimentConfig& c) { c.keep_prob = 0.0; });
    invalid([](sse::ExperimentConfig& c) { c.batch_size = 0; });
    invalid([](sse::ExperimentConfig& c) { c.jobs = 0; });

    sse::ExperimentConfig lm;
    lm.model = "lstm";
    lm.dataset = "text";
    lm.strategy = "lstm-tied";
    CHECK_NOTHROW(lm.validate());
    sse::ExperimentConfig bad_share = lm;
    bad_share.shared_embedding = true;
    bad_share.emb_dim = 64;
    bad_share.hidden = {128};
    CHECK_THROWS_WITH_AS(bad_share.validate(), doctest::Contains("shared_embedding"),
                         sse::ConfigError);
    sse::ExperimentConfig bad_strategy = lm;
    bad_strategy.strategy = "fnn-outgoing";
    CHECK_THROWS_AS(bad_strategy.validate(), sse::ConfigError);
}

TEST_CASE("relative data paths resolve under the data root when one is set") {
    {
        EnvVarGuard guard("SSE_DATA_ROOT", "/data/root");
        CHECK(sse::resolve_data_path("mnist/train.idx") ==
              fs::path("/data/root/mnist/train.idx"));
        CHECK(sse::resolve_data_path("/abs/file.idx") == fs::path("/abs/file.idx"));
    }
    {
        EnvVarGuard guard("SSE_DATA_ROOT", nullptr);
        CHECK(sse::resolve_data_path("mnist/train.idx") == fs::path("mnist/train.idx"));
    }
    {
        EnvVarGuard guard("SSE_DATA_ROOT", "");
        CHECK(sse::resolve_data_path("mnist/train.idx") == fs::path("mnist/train.idx"));
    }
}

TEST_CASE("load_data cross-checks files against the configured architecture") {
    const fs::path dir = temp_dir("load_data");
    sse::ExperimentConfig cfg;
    cfg.fnn_dims = {64, 16, 3};
    const auto train = sse::testing::write_synthetic_mnist(dir, "train", 30, 5, 8, 8, 3);
    const auto test = sse::testing::write_synthetic_mnist(dir, "test", 12, 6, 8, 8, 3);
    cfg.train_images = train.first.string();
    cfg.train_labels = train.second.string();
    cfg.test_images = test.first.string();
    cfg.test_labels = test.second.string();

    const sse::LoadedData data = sse::load_data(cfg);
    CHECK_FALSE(data.is_text);
    CHECK(data.train.images.rows() == 30);
    CHECK(data.train.images.cols() == 64);
    CHECK(data.test.labels.size() == 12);

    sse::ExperimentConfig wrong_input = cfg;
    wrong_input.fnn_dims = {49, 16, 3};
    CHECK_THROWS_WITH_AS(sse::load_data(wrong_input),
                         doctest::Contains("does not match image size"), sse::ConfigError);
    sse::ExperimentConfig wrong_output = cfg;
    wrong_output.fnn_dims = {64, 16, 2};
    CHECK_THROWS_WITH_AS(sse::load_data(wrong_output), doctest::Contains("outside fnn_dims"),
                         sse::ConfigError);
    sse::ExperimentConfig missing = cfg;
    missing.test_labels.clear();
    CHECK_THROWS_WITH_AS(sse::load_data(missing), doctest::Contains("is required"),
                         sse::ConfigError);
}

TEST_CASE("stage commands fail cleanly on a missing manifest") {
    sse::ExperimentConfig cfg;  // valid defaults; manifests are read before data
    CHECK_THROWS_WITH_AS(sse::cmd_prune_retrain(cfg, "/nonexistent/manifest.json"),
                         doctest::Contains("cannot open manifest"), sse::IoError);
    CHECK_THROWS_WITH_AS(sse::cmd_eval(cfg, "/nonexistent/manifest.json", false),
                         doctest::Contains("cannot open manifest"), sse::IoError);
}

TEST_CASE("a miniature classification pipeline runs end to end and reruns byte-identically") {
    const fs::path data_dir = temp_dir("fnn_pipeline_data");
    const fs::path out_a = temp_dir("fnn_pipeline_a");
    const sse::ExperimentConfig cfg = micro_fnn_config(data_dir, out_a);

    const std::vector<std::string> records = sse::cmd_pipeline(cfg);
    REQUIRE_FALSE(records.empty());

    for (const char* name : {"metrics.txt", "manifest.json", "pruned_manifest.json",
                             "sample_000.ssec", "sample_001.ssec", "pruned_000.ssec",
                             "pruned_001.ssec", "report.csv", "report.svg"})
        CHECK(fs::exists(out_a / name));

    const auto sample_summary = find_record(records, "sample");
    REQUIRE_FALSE(sample_summary.empty());
    CHECK(sample_summary.at("members") == "2");
    CHECK(sample_summary.at("diverged") == "0");
    CHECK(sample_summary.at("config") == cfg.hash());

    const auto pipeline = find_record(records, "pipeline");
    REQUIRE_FALSE(pipeline.empty());
    CHECK(pipeline.at("metric") == "error");
    const double unpruned = std::stod(pipeline.at("unpruned"));
    const double pruned = std::stod(pipeline.at("pruned"));
    CHECK(unpruned >= 0.0);
    CHECK(unpruned <= 1.0);
    CHECK(pruned >= 0.0);
    CHECK(pruned <= 1.0);

    // Each pruned member reaches at least the requested sparsity.
    std::size_t prune_records = 0;
    for (const std::string& line : records) {
        const auto kv = parse_record(line);
        if (!kv.count("record") || kv.at("record") != "prune_member") continue;
        ++prune_records;
        CHECK(std::stod(kv.at("sparsity")) >= 0.499);
        CHECK(std::stoull(kv.at("nonzero_params")) < std::stoull(kv.at("total_params")));
    }
    CHECK(prune_records == 2);

    const auto aggregate = find_record(records, "prune_retrain");
    REQUIRE_FALSE(aggregate.empty());
    CHECK(std::stod(aggregate.at("params_ratio")) < 0.51);
    CHECK(aggregate.at("members") == "2");

    // The metrics file holds exactly the returned records.
    CHECK(read_lines(out_a / "metrics.txt") == records);

    // Rerun into a different directory: identical records, identical bytes.
    const fs::path out_b = temp_dir("fnn_pipeline_b");
    sse::ExperimentConfig rerun = cfg;
    rerun.out_dir = out_b.string();
    const std::vector<std::string> rerun_records = sse::cmd_pipeline(rerun);
    CHECK(rerun_records == records);
    CHECK(read_file(out_b / "metrics.txt") == read_file(out_a / "metrics.txt"));
    CHECK(read_file(out_b / "sample_000.ssec") == read_file(out_a / "sample_000.ssec"));
    CHECK(read_file(out_b / "pruned_001.ssec") == read_file(out_a / "pruned_001.ssec"));
    CHECK(read_file(out_b / "report.csv") == read_file(out_a / "report.csv"));

    // Worker count is orchestration, not experiment identity.
    const fs::path out_c = temp_dir("fnn_pipeline_c");
    sse::ExperimentConfig parallel = cfg;
    parallel.out_dir = out_c.string();
    parallel.jobs = 2;
    CHECK(sse::cmd_pipeline(parallel) == records);
    CHECK(read_file(out_c / "metrics.txt") == read_file(out_a / "metrics.txt"));
}

TEST_CASE("a miniature language-model pipeline runs end to end") {
    const fs::path data_dir = temp_dir("lm_pipeline_data");
    const fs::path out_dir = temp_dir("lm_pipeline_out");
    const sse::ExperimentConfig cfg = micro_lm_config(data_dir, out_dir, "lstm-untied");

    const std::vector<std::string> records = sse::cmd_pipeline(cfg);
    const auto pipeline = find_record(records, "pipeline");
    REQUIRE_FALSE(pipeline.empty());
    CHECK(pipeline.at("metric") == "ppl");
    const double unpruned = std::stod(pipeline.at("unpruned"));
    const double pruned = std::stod(pipeline.at("pruned"));
    CHECK(std::isfinite(unpruned));
    CHECK(std::isfinite(pruned));
    CHECK(unpruned > 1.0);
    CHECK(pruned > 1.0);
    // A model trained on strongly predictable text beats the uniform
    // distribution over the vocabulary.
    CHECK(unpruned < 32.0);

    const auto eval_pruned = find_record(records, "eval");
    REQUIRE_FALSE(eval_pruned.empty());

    // Pruned members carry index lists; their structured FLOPs cannot exceed
    // the dense count of the stage-one architecture.
    const sse::ModelContainer member = sse::load_container(out_dir / "pruned_000.ssec");
    REQUIRE(member.lists.has_value());
    REQUIRE(member.mask.has_value());
    const auto sampled = sse::load_container(out_dir / "sample_000.ssec");
    CHECK(sse::count_flops(member.params, *member.lists).total_flops <=
          sse::count_flops(sampled.params).total_flops);
}

TEST_CASE("a miniature intrinsic-structure pipeline reduces and reports unit sizes") {
    const fs::path data_dir = temp_dir("iss_pipeline_data");
    const fs::path out_dir = temp_dir("iss_pipeline_out");
    sse::ExperimentConfig cfg = micro_lm_config(data_dir, out_dir, "lstm-iss");
    cfg.hidden = {6, 5};
    cfg.emb_dim = 5;
    cfg.retrain_epochs = 1;

    const std::vector<std::string> records = sse::cmd_pipeline(cfg);
    const auto pipeline = find_record(records, "pipeline");
    REQUIRE_FALSE(pipeline.empty());
    CHECK(pipeline.at("metric") == "ppl");

    std::size_t reduced_records = 0;
    for (const std::string& line : records) {
        const auto kv = parse_record(line);
        if (!kv.count("record") || kv.at("record") != "prune_member") continue;
        ++reduced_records;
        REQUIRE(kv.count("reduced_sizes"));
    }
    CHECK(reduced_records == 2);

    // Reduced members re-materialize as dense recurrent models.
    const sse::ModelContainer member = sse::load_container(out_dir / "pruned_000.ssec");
    const auto& p = std::get<sse::LstmLmParams>(member.params);
    CHECK(p.hidden.size() == 2);
    CHECK(p.hidden[0] <= 6);
    CHECK(p.hidden[1] <= 5);
    CHECK_FALSE(member.lists.has_value());
}

TEST_CASE("a zero-epoch baseline matches a zero-rate single-epoch baseline") {
    const fs::path data_dir = temp_dir("baseline_data");
    sse::ExperimentConfig cfg;
    cfg.fnn_dims = {64, 12, 3};
    const auto train = sse::testing::write_synthetic_mnist(data_dir, "train", 40, 3, 8, 8, 3);
    const auto test = sse::testing::write_synthetic_mnist(data_dir, "test", 20, 4, 8, 8, 3);
    cfg.train_images = train.first.string();
    cfg.train_labels = train.second.string();
    cfg.test_images = test.first.string();
    cfg.test_labels = test.second.string();
    cfg.batch_size = 20;
    cfg.lambda = 0.0;
    cfg.seed = 5;

    sse::ExperimentConfig zero_epochs = cfg;
    zero_epochs.epochs = 0;
    zero_epochs.out_dir = temp_dir("baseline_zero_epochs").string();
    const auto records = sse::cmd_train_baseline(zero_epochs);
    REQUIRE_FALSE(find_record(records, "train_baseline").empty());

    sse::ExperimentConfig zero_rate = cfg;
    zero_rate.epochs = 1;
    zero_rate.step_size = 0.0;
    zero_rate.out_dir = temp_dir("baseline_zero_rate").string();
    sse::cmd_train_baseline(zero_rate);

    const auto a = sse::load_container(fs::path(zero_epochs.out_dir) / "baseline.ssec");
    const auto b = sse::load_container(fs::path(zero_rate.out_dir) / "baseline.ssec");
    CHECK(sse::max_abs_difference(a.params, b.params) == 0.0);

    // The baseline manifest is a one-member ensemble the evaluator accepts.
    const auto eval_records =
        sse::cmd_eval(zero_epochs, fs::path(zero_epochs.out_dir) / "baseline_manifest.json", false);
    const auto eval = find_record(eval_records, "eval");
    REQUIRE_FALSE(eval.empty());
    CHECK(eval.at("members") == "1");
    CHECK(eval.at("stage") == "baseline");
    const double error = std::stod(eval.at("error"));
    CHECK(error >= 0.0);
    CHECK(error <= 1.0);
}
