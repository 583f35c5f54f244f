#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sse/corpus.hpp"
#include "sse/grouping.hpp"
#include "sse/gsp.hpp"
#include "sse/mnist.hpp"
#include "sse/params.hpp"
#include "sse/schedule.hpp"
#include "sse/sgld.hpp"

namespace sse {

/// Flat key=value experiment description. Every field maps to exactly one
/// key (same spelling); files hold one `key = value` pair per line with `#`
/// comments, and command-line flags override file values.
struct ExperimentConfig {
    // model
    std::string model = "fnn";  // fnn | lstm
    std::vector<std::size_t> fnn_dims = {784, 300, 100, 10};
    std::size_t vocab_limit = 0;  // 0 = unlimited
    std::size_t emb_dim = 128;
    std::vector<std::size_t> hidden = {128};
    bool shared_embedding = false;
    double init_range = 0.05;
    double keep_prob = 1.0;

    // dataset
    std::string dataset = "mnist";  // mnist | text
    std::string train_images, train_labels, test_images, test_labels;
    std::string train_text, valid_text, test_text;
    std::size_t bptt = 16;

    // group sparse prior
    std::string strategy = "fnn-outgoing";
    double lambda = 0.0;
    double norm_epsilon = 0.0;
    bool output_groups = false;

    // sampling / baseline training
    double step_size = 0.1;
    bool anneal = false;
    double decay_factor = 1.0;
    std::size_t decay_every = 1;
    std::size_t batch_size = 128;
    std::size_t epochs = 10;
    std::size_t burn_in = 0;
    std::size_t num_samples = 1;
    double clip_norm = 0.0;
    double noise_scale = 1.0;
    std::uint64_t seed = 1;

    // prune + retrain
    double sparsity = 0.0;
    std::size_t retrain_epochs = 0;
    double retrain_lr = 0.1;
    double retrain_decay = 1.0;
    std::size_t retrain_decay_every = 1;
    double retrain_clip = 0.0;
    double retrain_lambda = 0.0;

    // orchestration
    std::string out_dir = "sse-run";
    std::size_t jobs = 1;

    /// Assigns one key; throws ConfigError on an unknown key or a value that
    /// does not parse.
    void set(const std::string& key, const std::string& value);
    /// Every accepted key, sorted (drives flag registration and docs).
    static const std::vector<std::string>& keys();
    /// Reads a key=value file (IoError if unreadable) and applies every pair.
    static ExperimentConfig from_file(const std::filesystem::path& path);

    /// Stable dump of every experiment-defining key, sorted, with normalized
    /// values. out_dir and jobs are excluded: artifact location and worker
    /// count never change results. Two configs describe the same experiment
    /// iff their canonical forms match.
    std::string canonical() const;
    /// FNV-1a 64-bit over canonical(), as 16 hex digits; stamped on every
    /// metrics record for provenance.
    std::string hash() const;

    /// Checked views onto the sampler/prior/schedule fields; validation
    /// errors surface as ConfigError.
    SgldConfig sgld() const;
    GspConfig gsp() const;
    GroupStrategy group_strategy() const;
    LrSchedule train_schedule() const;
    LrSchedule retrain_schedule() const;

    void validate() const;  // cross-field checks (model/dataset pairing etc.)
};

/// Relative dataset paths resolve under $SSE_DATA_ROOT when it is set;
/// absolute paths and unset roots pass through unchanged.
std::filesystem::path resolve_data_path(const std::string& path);

/// Everything a run needs from disk, loaded once up front.
struct LoadedData {
    bool is_text = false;
    MnistDataset train, test;              // classification
    TextCorpus corpus;                     // language modeling
    std::vector<TokenBatch> train_windows, test_windows;
};
LoadedData load_data(const ExperimentConfig& cfg);

/// Each command validates its config, performs the stage, writes artifacts
/// under cfg.out_dir, appends its records to <out_dir>/metrics.txt, and
/// returns those records. Records are single lines of `key=value` tokens
/// starting with `record=<name>` and ending with `config=<hash>`; doubles are
/// printed with 17 significant digits so a rerun is byte-identical.
std::vector<std::string> cmd_train_baseline(const ExperimentConfig& cfg);
std::vector<std::string> cmd_sample(const ExperimentConfig& cfg);
std::vector<std::string> cmd_prune_retrain(const ExperimentConfig& cfg,
                                           const std::filesystem::path& manifest_path);
std::vector<std::string> cmd_eval(const ExperimentConfig& cfg,
                                  const std::filesystem::path& manifest_path, bool curve);
std::vector<std::string> cmd_report(const ExperimentConfig& cfg,
                                    const std::filesystem::path& metrics_path);
/// sample -> eval -> prune-retrain -> eval -> report, into a fresh
/// <out_dir>/metrics.txt.
std::vector<std::string> cmd_pipeline(const ExperimentConfig& cfg);

}  // namespace sse
