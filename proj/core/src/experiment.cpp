#include "sse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>
#include <variant>

#include "json.hpp"

#include "sse/container.hpp"
#include "sse/ensemble.hpp"
#include "sse/errors.hpp"
#include "sse/problem.hpp"
#include "sse/pruning.hpp"

namespace sse {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Stream ids carved out of the run seed; member streams are keyed on the
// member index so processing order (or concurrency) cannot change results.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kProblemStream = 2;
constexpr std::uint64_t kMemberStreamBase = 1000;

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw ConfigError("config key " + key + ": cannot parse '" + value + "' as a boolean");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": cannot parse '" + value + "' as an integer");
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": cannot parse '" + value + "' as a number");
    }
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& value) {
    std::vector<std::size_t> dims;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) dims.push_back(parse_size(key, trim(part)));
    if (dims.empty()) throw ConfigError("config key " + key + ": empty dimension list");
    return dims;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Values embedded in key=value records must stay single-token.
std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (std::isspace(static_cast<unsigned char>(c)) || c == '=') c = '_';
    return out;
}

class Record {
  public:
    explicit Record(const std::string& name) : line_("record=" + name) {}
    Record& kv(const std::string& k, const std::string& v) {
        line_ += " " + k + "=" + v;
        return *this;
    }
    Record& kv(const std::string& k, const char* v) { return kv(k, std::string(v)); }
    Record& kv(const std::string& k, double v) { return kv(k, fmt(v)); }
    Record& kv(const std::string& k, std::size_t v) { return kv(k, std::to_string(v)); }
    std::string close(const std::string& config_hash) const {
        return line_ + " config=" + config_hash;
    }

  private:
    std::string line_;
};

void append_metrics(const fs::path& out_dir, const std::vector<std::string>& lines) {
    fs::create_directories(out_dir);
    std::ofstream file(out_dir / "metrics.txt", std::ios::app);
    if (!file) throw IoError("cannot open " + (out_dir / "metrics.txt").string() + " for append");
    for (const std::string& line : lines) file << line << '\n';
    if (!file) throw IoError("short write to " + (out_dir / "metrics.txt").string());
}

std::map<std::string, std::string> parse_record(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(line);
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos) kv[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return kv;
}

struct Manifest {
    std::string stage;
    std::string config_hash;
    std::vector<std::string> members;  // file names relative to the manifest directory
};

void write_manifest(const fs::path& path, const Manifest& m) {
    json j;
    j["stage"] = m.stage;
    j["config"] = m.config_hash;
    j["members"] = m.members;
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file << j.dump(2) << '\n';
    if (!file) throw IoError("short write to " + path.string());
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open manifest " + path.string());
    Manifest m;
    try {
        json j = json::parse(file);
        m.stage = j.at("stage").get<std::string>();
        m.config_hash = j.at("config").get<std::string>();
        m.members = j.at("members").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError("manifest " + path.string() + " is malformed: " + e.what());
    }
    return m;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
}

bool is_iss(GroupStrategy s) {
    return s == GroupStrategy::LstmIss || s == GroupStrategy::LstmIssEmbedCols ||
           s == GroupStrategy::LstmIssSharedEmbed;
}

ModelParams init_model(const ExperimentConfig& cfg, std::size_t vocab, RngStream& rng) {
    if (cfg.model == "fnn") return FnnParams::glorot(cfg.fnn_dims, rng);
    return LstmLmParams::uniform(vocab, cfg.emb_dim, cfg.hidden, cfg.shared_embedding,
                                 cfg.init_range, rng);
}

std::unique_ptr<TrainingProblem> make_problem(const ExperimentConfig& cfg, const LoadedData& data,
                                              ModelParams init, std::uint64_t seed) {
    const DropoutSpec dropout{cfg.keep_prob};
    if (std::holds_alternative<FnnParams>(init))
        return std::make_unique<FnnClassificationProblem>(
            std::get<FnnParams>(std::move(init)), data.train.images, data.train.labels,
            cfg.batch_size, dropout, seed);
    return std::make_unique<LstmLmProblem>(std::get<LstmLmParams>(std::move(init)),
                                           data.train_windows, dropout, seed);
}

std::string member_file(const std::string& prefix, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03zu.ssec", prefix.c_str(), index);
    return buf;
}

std::size_t dense_weight_count(const ModelParams& m) { return weight_count(m); }

/// Per-member quality metric on the evaluation split.
double member_metric(const ModelParams& m, const LoadedData& data) {
    if (const auto* f = std::get_if<FnnParams>(&m))
        return classification_error(fnn_forward(*f, data.test.images), data.test.labels);
    std::vector<ModelParams> one;
    one.push_back(m);
    return ensemble_perplexity(one, data.test_windows);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "model") model = value;
    else if (key == "fnn_dims") fnn_dims = parse_dims(key, value);
    else if (key == "vocab_limit") vocab_limit = parse_size(key, value);
    else if (key == "emb_dim") emb_dim = parse_size(key, value);
    else if (key == "hidden") hidden = parse_dims(key, value);
    else if (key == "shared_embedding") shared_embedding = parse_bool(key, value);
    else if (key == "init_range") init_range = parse_double(key, value);
    else if (key == "keep_prob") keep_prob = parse_double(key, value);
    else if (key == "dataset") dataset = value;
    else if (key == "train_images") train_images = value;
    else if (key == "train_labels") train_labels = value;
    else if (key == "test_images") test_images = value;
    else if (key == "test_labels") test_labels = value;
    else if (key == "train_text") train_text = value;
    else if (key == "valid_text") valid_text = value;
    else if (key == "test_text") test_text = value;
    else if (key == "bptt") bptt = parse_size(key, value);
    else if (key == "strategy") strategy = value;
    else if (key == "lambda") lambda = parse_double(key, value);
    else if (key == "norm_epsilon") norm_epsilon = parse_double(key, value);
    else if (key == "output_groups") output_groups = parse_bool(key, value);
    else if (key == "step_size") step_size = parse_double(key, value);
    else if (key == "anneal") anneal = parse_bool(key, value);
    else if (key == "decay_factor") decay_factor = parse_double(key, value);
    else if (key == "decay_every") decay_every = parse_size(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "burn_in") burn_in = parse_size(key, value);
    else if (key == "num_samples") num_samples = parse_size(key, value);
    else if (key == "clip_norm") clip_norm = parse_double(key, value);
    else if (key == "noise_scale") noise_scale = parse_double(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "sparsity") sparsity = parse_double(key, value);
    else if (key == "retrain_epochs") retrain_epochs = parse_size(key, value);
    else if (key == "retrain_lr") retrain_lr = parse_double(key, value);
    else if (key == "retrain_decay") retrain_decay = parse_double(key, value);
    else if (key == "retrain_decay_every") retrain_decay_every = parse_size(key, value);
    else if (key == "retrain_clip") retrain_clip = parse_double(key, value);
    else if (key == "retrain_lambda") retrain_lambda = parse_double(key, value);
    else if (key == "out_dir") out_dir = value;
    else if (key == "jobs") jobs = parse_size(key, value);
    else throw ConfigError("unknown config key: " + key);
}

const std::vector<std::string>& ExperimentConfig::keys() {
    static const std::vector<std::string> list = {
        "anneal",      "batch_size",   "bptt",          "burn_in",
        "clip_norm",   "dataset",      "decay_every",   "decay_factor",
        "emb_dim",     "epochs",       "fnn_dims",      "hidden",
        "init_range",  "jobs",         "keep_prob",     "lambda",
        "model",       "noise_scale",  "norm_epsilon",  "num_samples",
        "out_dir",     "output_groups", "retrain_clip", "retrain_decay",
        "retrain_decay_every", "retrain_epochs", "retrain_lambda", "retrain_lr",
        "seed",        "shared_embedding", "sparsity",  "step_size",
        "strategy",    "test_images",  "test_labels",   "test_text",
        "train_images", "train_labels", "train_text",   "valid_text",
        "vocab_limit",
    };
    return list;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(file, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

// out_dir and jobs are deliberately absent: where artifacts land and how many
// workers ran must not change what an experiment *is*, so reruns into a fresh
// directory (or with different parallelism) keep the same provenance hash and
// byte-identical records.
std::string ExperimentConfig::canonical() const {
    std::vector<std::pair<std::string, std::string>> kv = {
        {"anneal", anneal ? "1" : "0"},
        {"batch_size", std::to_string(batch_size)},
        {"bptt", std::to_string(bptt)},
        {"burn_in", std::to_string(burn_in)},
        {"clip_norm", fmt(clip_norm)},
        {"dataset", dataset},
        {"decay_every", std::to_string(decay_every)},
        {"decay_factor", fmt(decay_factor)},
        {"emb_dim", std::to_string(emb_dim)},
        {"epochs", std::to_string(epochs)},
        {"fnn_dims", join_sizes(fnn_dims)},
        {"hidden", join_sizes(hidden)},
        {"init_range", fmt(init_range)},
        {"keep_prob", fmt(keep_prob)},
        {"lambda", fmt(lambda)},
        {"model", model},
        {"noise_scale", fmt(noise_scale)},
        {"norm_epsilon", fmt(norm_epsilon)},
        {"num_samples", std::to_string(num_samples)},
        {"output_groups", output_groups ? "1" : "0"},
        {"retrain_clip", fmt(retrain_clip)},
        {"retrain_decay", fmt(retrain_decay)},
        {"retrain_decay_every", std::to_string(retrain_decay_every)},
        {"retrain_epochs", std::to_string(retrain_epochs)},
        {"retrain_lambda", fmt(retrain_lambda)},
        {"retrain_lr", fmt(retrain_lr)},
        {"seed", std::to_string(seed)},
        {"shared_embedding", shared_embedding ? "1" : "0"},
        {"sparsity", fmt(sparsity)},
        {"step_size", fmt(step_size)},
        {"strategy", strategy},
        {"test_images", test_images},
        {"test_labels", test_labels},
        {"test_text", test_text},
        {"train_images", train_images},
        {"train_labels", train_labels},
        {"train_text", train_text},
        {"valid_text", valid_text},
        {"vocab_limit", std::to_string(vocab_limit)},
    };
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    const std::string text = canonical();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SgldConfig ExperimentConfig::sgld() const {
    SgldConfig c;
    c.step_size = step_size;
    c.anneal = anneal;
    c.decay_factor = decay_factor;
    c.decay_every = decay_every;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.burn_in_epochs = burn_in;
    c.num_samples = num_samples;
    c.clip_norm = clip_norm;
    c.noise_scale = noise_scale;
    c.seed = seed;
    return c;
}

GspConfig ExperimentConfig::gsp() const { return GspConfig{lambda, norm_epsilon}; }

GroupStrategy ExperimentConfig::group_strategy() const { return strategy_from_string(strategy); }

LrSchedule ExperimentConfig::train_schedule() const {
    LrSchedule s;
    s.initial = step_size;
    if (anneal) {
        s.decay_factor = decay_factor;
        s.decay_every = decay_every;
    }
    s.validate();
    return s;
}

LrSchedule ExperimentConfig::retrain_schedule() const {
    LrSchedule s{retrain_lr, retrain_decay, retrain_decay_every};
    s.validate();
    return s;
}

void ExperimentConfig::validate() const {
    if (model != "fnn" && model != "lstm")
        throw ConfigError("model must be fnn or lstm, got " + model);
    if (dataset != "mnist" && dataset != "text")
        throw ConfigError("dataset must be mnist or text, got " + dataset);
    if ((model == "fnn") != (dataset == "mnist"))
        throw ConfigError("model " + model + " cannot train on dataset " + dataset);
    if (model == "fnn") {
        if (fnn_dims.size() < 2) throw ConfigError("fnn_dims needs at least input,output");
        for (std::size_t d : fnn_dims)
            if (d == 0) throw ConfigError("fnn_dims entries must be >= 1");
    } else {
        if (hidden.empty()) throw ConfigError("hidden must list at least one layer size");
        for (std::size_t d : hidden)
            if (d == 0) throw ConfigError("hidden entries must be >= 1");
        if (emb_dim == 0) throw ConfigError("emb_dim must be >= 1");
        if (shared_embedding && emb_dim != hidden.back())
            throw ConfigError("shared_embedding requires emb_dim == last hidden size");
        if (bptt == 0) throw ConfigError("bptt must be >= 1");
    }
    const GroupStrategy gs = group_strategy();  // throws on unknown names
    if ((gs == GroupStrategy::FnnOutgoing) != (model == "fnn"))
        throw ConfigError("strategy " + strategy + " does not apply to model " + model);
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(init_range > 0.0)) throw ConfigError("init_range must be > 0");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must be in (0,1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(norm_epsilon >= 0.0)) throw ConfigError("norm_epsilon must be >= 0");
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must be in [0,1)");
    if (!(retrain_lambda >= 0.0)) throw ConfigError("retrain_lambda must be >= 0");
    if (!(retrain_clip >= 0.0)) throw ConfigError("retrain_clip must be >= 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
    if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be >= 0");
    if (jobs == 0) throw ConfigError("jobs must be >= 1");
    if (retrain_epochs > 0) retrain_schedule();  // validates rate/decay fields
}

std::filesystem::path resolve_data_path(const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("SSE_DATA_ROOT"))
        if (*root) return fs::path(root) / p;
    return p;
}

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData data;
    if (cfg.dataset == "mnist") {
        for (const auto& [key, value] :
             {std::pair<const char*, const std::string&>{"train_images", cfg.train_images},
              {"train_labels", cfg.train_labels},
              {"test_images", cfg.test_images},
              {"test_labels", cfg.test_labels}})
            if (value.empty()) throw ConfigError(std::string("config key ") + key + " is required");
        data.train = load_mnist_idx(resolve_data_path(cfg.train_images),
                                    resolve_data_path(cfg.train_labels));
        data.test = load_mnist_idx(resolve_data_path(cfg.test_images),
                                   resolve_data_path(cfg.test_labels));
        if (data.train.images.cols() != cfg.fnn_dims.front())
            throw ConfigError("fnn_dims input " + std::to_string(cfg.fnn_dims.front()) +
                              " does not match image size " +
                              std::to_string(data.train.images.cols()));
        for (int label : data.train.labels)
            if (static_cast<std::size_t>(label) >= cfg.fnn_dims.back())
                throw ConfigError("label " + std::to_string(label) + " outside fnn_dims output " +
                                  std::to_string(cfg.fnn_dims.back()));
    } else {
        data.is_text = true;
        if (cfg.train_text.empty()) throw ConfigError("config key train_text is required");
        if (cfg.test_text.empty()) throw ConfigError("config key test_text is required");
        const std::string train = read_text_file(resolve_data_path(cfg.train_text));
        const std::string valid =
            cfg.valid_text.empty() ? std::string() : read_text_file(resolve_data_path(cfg.valid_text));
        const std::string test = read_text_file(resolve_data_path(cfg.test_text));
        data.corpus = build_corpus_from_text(train, valid, test, cfg.vocab_limit);
        data.train_windows = bptt_batches(data.corpus.train, cfg.batch_size, cfg.bptt);
        data.test_windows = bptt_batches(data.corpus.test, cfg.batch_size, cfg.bptt);
    }
    return data;
}

std::vector<std::string> cmd_train_baseline(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const LoadedData data = load_data(cfg);
    const RngStream base(cfg.seed);
    RngStream init_rng = base.split(kInitStream);
    ModelParams init = init_model(cfg, data.corpus.vocab_size(), init_rng);
    auto problem = make_problem(cfg, data, std::move(init), base.split(kProblemStream).next_u64());

    GroupingSpec groups;
    const bool use_prior = cfg.lambda > 0.0;
    if (use_prior) groups = build_groups(problem->params(), cfg.group_strategy(), cfg.output_groups);
    const std::vector<double> nll =
        sgd_train(*problem, cfg.epochs, cfg.train_schedule(), cfg.clip_norm, nullptr,
                  use_prior ? &groups : nullptr, cfg.gsp());

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    ModelContainer c;
    c.params = problem->params();
    c.metadata = {{"stage", "baseline"},
                  {"seed", std::to_string(cfg.seed)},
                  {"epochs", std::to_string(cfg.epochs)},
                  {"strategy", cfg.strategy}};
    save_container(out_dir / "baseline.ssec", c);
    write_manifest(out_dir / "baseline_manifest.json", {"baseline", hash, {"baseline.ssec"}});

    Record r("train_baseline");
    r.kv("epochs", cfg.epochs);
    if (!nll.empty()) r.kv("final_nll", nll.back());
    r.kv("params", nonzero_weight_count(c.params)).kv("file", "baseline.ssec");
    std::vector<std::string> records = {r.close(hash)};
    append_metrics(out_dir, records);
    return records;
}

std::vector<std::string> cmd_sample(const ExperimentConfig& cfg) {
    cfg.validate();
    SgldConfig sgld_cfg = cfg.sgld();
    sgld_cfg.validate();
    const std::string hash = cfg.hash();
    const LoadedData data = load_data(cfg);
    const RngStream base(cfg.seed);
    RngStream init_rng = base.split(kInitStream);
    ModelParams init = init_model(cfg, data.corpus.vocab_size(), init_rng);
    auto problem = make_problem(cfg, data, std::move(init), base.split(kProblemStream).next_u64());

    GroupingSpec groups;
    const bool use_prior = cfg.lambda > 0.0;
    if (use_prior) groups = build_groups(problem->params(), cfg.group_strategy(), cfg.output_groups);
    const SampleSet set = run_sampling(*problem, sgld_cfg, use_prior ? &groups : nullptr, cfg.gsp());

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    std::vector<std::string> records;
    Manifest manifest{"sample", hash, {}};
    for (std::size_t i = 0; i < set.snapshots.size(); ++i) {
        const Snapshot& snap = set.snapshots[i];
        ModelContainer c;
        c.params = snap.params;
        c.metadata = {{"stage", "sample"},
                      {"seed", std::to_string(cfg.seed)},
                      {"member", std::to_string(i)},
                      {"epoch", std::to_string(snap.epoch)},
                      {"strategy", cfg.strategy}};
        const std::string file = member_file("sample", i);
        save_container(out_dir / file, c);
        manifest.members.push_back(file);
        records.push_back(Record("sample_member")
                              .kv("index", i)
                              .kv("epoch", snap.epoch)
                              .kv("train_nll", snap.train_nll)
                              .kv("file", file)
                              .close(hash));
    }
    write_manifest(out_dir / "manifest.json", manifest);
    Record summary("sample");
    summary.kv("members", set.snapshots.size())
        .kv("epochs", cfg.epochs)
        .kv("diverged", std::size_t(set.diverged ? 1 : 0));
    if (!set.note.empty()) summary.kv("note", sanitize(set.note));
    records.push_back(summary.close(hash));
    append_metrics(out_dir, records);
    if (set.diverged) throw DivergenceError(set.note);
    return records;
}

namespace {

struct MemberOutcome {
    bool ok = false;
    std::string error;
    std::exception_ptr exception;
    ModelContainer container;
    SparsityReport report;
    double threshold = 0.0;
};

MemberOutcome process_member(const ExperimentConfig& cfg, const LoadedData& data,
                             const fs::path& member_path, std::size_t index,
                             const GroupingSpec* retrain_groups) {
    MemberOutcome out;
    try {
        ModelParams params = load_container(member_path).params;
        const GroupStrategy strategy = cfg.group_strategy();
        out.threshold = compute_threshold(params, cfg.sparsity);
        const PruneMask mask = prune(params, out.threshold);
        const std::uint64_t member_seed =
            RngStream(cfg.seed).split(kMemberStreamBase + index).next_u64();
        const GspConfig retrain_gsp{cfg.retrain_lambda, cfg.norm_epsilon};

        if (is_iss(strategy)) {
            ReducedLstm reduced =
                extract_reduced_lstm(std::get<LstmLmParams>(params), mask, strategy);
            auto problem = make_problem(cfg, data, ModelParams(reduced.params), member_seed);
            if (cfg.retrain_epochs > 0) {
                GroupingSpec reduced_groups;
                if (cfg.retrain_lambda > 0.0)
                    reduced_groups = build_groups(problem->params(), strategy, cfg.output_groups);
                sgd_train(*problem, cfg.retrain_epochs, cfg.retrain_schedule(), cfg.retrain_clip,
                          nullptr, cfg.retrain_lambda > 0.0 ? &reduced_groups : nullptr,
                          retrain_gsp);
            }
            reduced.params = std::get<LstmLmParams>(problem->params());
            out.report = reduced_report(reduced);
            out.container.params = reduced.params;
        } else {
            const IndexLists lists = extract_index_lists(params, mask, strategy);
            auto problem = make_problem(cfg, data, params, member_seed);
            ModelParams trained =
                cfg.retrain_epochs > 0
                    ? retrain(*problem, mask, cfg.retrain_epochs, cfg.retrain_schedule(),
                              cfg.retrain_clip, cfg.retrain_lambda > 0.0 ? retrain_groups : nullptr,
                              retrain_gsp)
                    : std::move(params);
            out.report = count_flops(trained, lists);
            out.container.params = std::move(trained);
            out.container.mask = mask;
            out.container.lists = lists;
        }
        out.container.metadata = {{"stage", "pruned"},
                                  {"seed", std::to_string(cfg.seed)},
                                  {"member", std::to_string(index)},
                                  {"strategy", cfg.strategy},
                                  {"sparsity", fmt(cfg.sparsity)},
                                  {"retrain_epochs", std::to_string(cfg.retrain_epochs)}};
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
        out.exception = std::current_exception();
    }
    return out;
}

}  // namespace

std::vector<std::string> cmd_prune_retrain(const ExperimentConfig& cfg,
                                           const std::filesystem::path& manifest_path) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const Manifest manifest = read_manifest(manifest_path);
    if (manifest.members.empty()) throw ConfigError("manifest has no members: " + manifest_path.string());
    const LoadedData data = load_data(cfg);
    const fs::path member_dir = manifest_path.parent_path();
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);

    // Groups for an optional prior during retraining; every stage-one member
    // shares the dense architecture, so one spec serves them all.
    GroupingSpec retrain_groups;
    if (cfg.retrain_lambda > 0.0 && !is_iss(cfg.group_strategy())) {
        const ModelParams first = load_container(member_dir / manifest.members.front()).params;
        retrain_groups = build_groups(first, cfg.group_strategy(), cfg.output_groups);
    }

    const std::size_t count = manifest.members.size();
    std::vector<MemberOutcome> outcomes(count);
    auto work = [&](std::size_t i) {
        outcomes[i] = process_member(cfg, data, member_dir / manifest.members[i], i,
                                     &retrain_groups);
    };
    if (cfg.jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto runner = [&]() {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(cfg.jobs, count); ++t) pool.emplace_back(runner);
        for (std::thread& t : pool) t.join();
    }

    std::vector<std::string> records;
    Manifest pruned{"pruned", hash, {}};
    std::size_t dense_params = 0, params_total = 0, flops_total = 0, ok_count = 0;
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < count; ++i) {
        MemberOutcome& out = outcomes[i];
        if (!out.ok) {
            if (!first_error) first_error = out.exception;
            records.push_back(Record("member_failure")
                                  .kv("index", i)
                                  .kv("error", sanitize(out.error))
                                  .close(hash));
            continue;
        }
        const std::string file = member_file("pruned", i);
        save_container(out_dir / file, out.container);
        pruned.members.push_back(file);
        ++ok_count;
        params_total += out.report.nonzero_params;
        flops_total += out.report.total_flops;
        if (dense_params == 0) dense_params = out.report.total_params;
        Record r("prune_member");
        r.kv("index", i)
            .kv("threshold", out.threshold)
            .kv("total_params", out.report.total_params)
            .kv("nonzero_params", out.report.nonzero_params)
            .kv("sparsity", out.report.sparsity)
            .kv("flops", out.report.total_flops);
        if (!out.report.reduced_sizes.empty())
            r.kv("reduced_sizes", join_sizes(out.report.reduced_sizes));
        r.kv("file", file);
        records.push_back(r.close(hash));
    }
    // Dense totals come from the stage-one architecture; reduced ISS members
    // report their original dense size in total_params.
    if (ok_count > 0) {
        Record agg("prune_retrain");
        agg.kv("members", ok_count)
            .kv("failed", count - ok_count)
            .kv("params_total", params_total)
            .kv("params_mean", double(params_total) / double(ok_count))
            .kv("flops_total", flops_total)
            .kv("flops_mean", double(flops_total) / double(ok_count))
            .kv("dense_params", dense_params)
            .kv("params_ratio", double(params_total) / double(ok_count) / double(dense_params));
        records.push_back(agg.close(hash));
        write_manifest(out_dir / "pruned_manifest.json", pruned);
    }
    append_metrics(out_dir, records);
    if (ok_count == 0 && first_error) std::rethrow_exception(first_error);
    return records;
}

std::vector<std::string> cmd_eval(const ExperimentConfig& cfg,
                                  const std::filesystem::path& manifest_path, bool curve) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const Manifest manifest = read_manifest(manifest_path);
    if (manifest.members.empty()) throw ConfigError("manifest has no members: " + manifest_path.string());
    const LoadedData data = load_data(cfg);
    const fs::path member_dir = manifest_path.parent_path();

    std::vector<ModelParams> members;
    std::vector<std::size_t> nonzero, flops;
    for (const std::string& file : manifest.members) {
        ModelContainer c = load_container(member_dir / file);
        nonzero.push_back(nonzero_weight_count(c.params));
        flops.push_back(c.lists ? count_flops(c.params, *c.lists).total_flops
                                : count_flops(c.params).total_flops);
        members.push_back(std::move(c.params));
    }
    const bool is_fnn = std::holds_alternative<FnnParams>(members.front());
    for (const ModelParams& m : members) {
        if (std::holds_alternative<FnnParams>(m) != is_fnn)
            throw ConfigError("manifest mixes model kinds: " + manifest_path.string());
        if (is_fnn) {
            const auto& a = std::get<FnnParams>(members.front());
            const auto& b = std::get<FnnParams>(m);
            if (a.input_dim() != b.input_dim() || a.num_classes() != b.num_classes())
                throw ConfigError("members disagree on input/output dims: " +
                                  manifest_path.string());
        } else if (std::get<LstmLmParams>(m).vocab != std::get<LstmLmParams>(members.front()).vocab) {
            throw ConfigError("members disagree on vocabulary size: " + manifest_path.string());
        }
    }
    if (is_fnn != !data.is_text)
        throw ConfigError("member model kind does not match the configured dataset");

    const char* metric = is_fnn ? "error" : "ppl";
    std::vector<std::string> records;
    double best = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const double value = member_metric(members[i], data);
        best = (i == 0) ? value : std::min(best, value);
        mean += value;
        records.push_back(Record("member_eval")
                              .kv("index", i)
                              .kv(metric, value)
                              .kv("params", nonzero[i])
                              .kv("flops", flops[i])
                              .kv("file", manifest.members[i])
                              .close(hash));
    }
    mean /= double(members.size());

    std::vector<double> curve_values;
    if (is_fnn)
        curve_values = ensemble_error_curve(members, data.test.images, data.test.labels);
    else
        curve_values = ensemble_perplexity_curve(members, data.test_windows);
    const double ensemble_value = curve_values.back();

    std::size_t params_total = 0, flops_total = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        params_total += nonzero[i];
        flops_total += flops[i];
    }
    records.push_back(Record("eval")
                          .kv(metric, ensemble_value)
                          .kv("members", members.size())
                          .kv("best_member", best)
                          .kv("member_mean", mean)
                          .kv("params_total", params_total)
                          .kv("params_mean", double(params_total) / double(members.size()))
                          .kv("flops_total", flops_total)
                          .kv("flops_mean", double(flops_total) / double(members.size()))
                          .kv("stage", manifest.stage)
                          .close(hash));
    if (curve)
        for (std::size_t k = 0; k < curve_values.size(); ++k)
            records.push_back(Record("eval_curve")
                                  .kv("members", k + 1)
                                  .kv(metric, curve_values[k])
                                  .kv("stage", manifest.stage)
                                  .close(hash));
    append_metrics(fs::path(cfg.out_dir), records);
    return records;
}

namespace {

struct CurveSeries {
    std::string stage;
    std::string metric;
    std::vector<std::pair<std::size_t, double>> points;
};

std::string render_svg(const std::vector<CurveSeries>& series) {
    const double width = 640, height = 400, margin = 60;
    double min_v = 0, max_v = 1;
    std::size_t max_m = 1;
    bool first = true;
    for (const CurveSeries& s : series)
        for (const auto& [m, v] : s.points) {
            if (first) {
                min_v = max_v = v;
                first = false;
            }
            min_v = std::min(min_v, v);
            max_v = std::max(max_v, v);
            max_m = std::max(max_m, m);
        }
    if (max_v == min_v) {
        max_v += 1.0;
        min_v -= 1.0;
    }
    const double pad = 0.05 * (max_v - min_v);
    min_v -= pad;
    max_v += pad;
    auto x_of = [&](double m) {
        return margin + (width - 2 * margin) * (max_m == 1 ? 0.5 : (m - 1) / double(max_m - 1));
    };
    auto y_of = [&](double v) {
        return height - margin - (height - 2 * margin) * (v - min_v) / (max_v - min_v);
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                      "viewBox=\"0 0 640 400\">\n";
    svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + num(margin) + "\" y1=\"" + num(height - margin) + "\" x2=\"" +
           num(width - margin) + "\" y2=\"" + num(height - margin) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(margin) + "\" y1=\"" + num(margin) + "\" x2=\"" + num(margin) +
           "\" y2=\"" + num(height - margin) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(width / 2) + "\" y=\"" + num(height - margin / 3) +
           "\" text-anchor=\"middle\" font-size=\"14\">members</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const CurveSeries& s = series[i];
        const char* color = colors[i % 4];
        std::string pts;
        for (const auto& [m, v] : s.points)
            pts += num(x_of(double(m))) + "," + num(y_of(v)) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" "
               "points=\"" + pts + "\"/>\n";
        for (const auto& [m, v] : s.points)
            svg += "<circle cx=\"" + num(x_of(double(m))) + "\" cy=\"" + num(y_of(v)) +
                   "\" r=\"3\" fill=\"" + color + "\"/>\n";
        svg += "<text x=\"" + num(width - margin) + "\" y=\"" + num(margin + 18.0 * double(i)) +
               "\" text-anchor=\"end\" font-size=\"13\" fill=\"" + color + "\">" + s.stage + " " +
               s.metric + "</text>\n";
    }
    svg += "<text x=\"" + num(margin - 6) + "\" y=\"" + num(y_of(min_v + pad)) +
           "\" text-anchor=\"end\" font-size=\"12\">" + num(min_v + pad) + "</text>\n";
    svg += "<text x=\"" + num(margin - 6) + "\" y=\"" + num(y_of(max_v - pad)) +
           "\" text-anchor=\"end\" font-size=\"12\">" + num(max_v - pad) + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::vector<std::string> cmd_report(const ExperimentConfig& cfg,
                                    const std::filesystem::path& metrics_path) {
    const std::string hash = cfg.hash();
    std::ifstream file(metrics_path);
    if (!file) throw IoError("cannot open metrics file " + metrics_path.string());
    std::vector<CurveSeries> series;
    std::string line;
    while (std::getline(file, line)) {
        const auto kv = parse_record(line);
        const auto rec = kv.find("record");
        if (rec == kv.end() || rec->second != "eval_curve") continue;
        const std::string stage = kv.count("stage") ? kv.at("stage") : "run";
        const std::string metric = kv.count("error") ? "error" : "ppl";
        const auto value_it = kv.find(metric);
        const auto members_it = kv.find("members");
        if (value_it == kv.end() || members_it == kv.end()) continue;
        auto it = std::find_if(series.begin(), series.end(),
                               [&](const CurveSeries& s) { return s.stage == stage; });
        if (it == series.end()) {
            series.push_back({stage, metric, {}});
            it = series.end() - 1;
        }
        it->points.emplace_back(parse_size("members", members_it->second),
                                parse_double(metric, value_it->second));
    }
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    std::size_t points = 0;
    {
        std::ofstream csv(out_dir / "report.csv", std::ios::trunc);
        if (!csv) throw IoError("cannot open " + (out_dir / "report.csv").string());
        csv << "stage,members,value\n";
        for (const CurveSeries& s : series)
            for (const auto& [m, v] : s.points) {
                csv << s.stage << ',' << m << ',' << fmt(v) << '\n';
                ++points;
            }
        if (!csv) throw IoError("short write to " + (out_dir / "report.csv").string());
    }
    {
        std::ofstream svg(out_dir / "report.svg", std::ios::trunc);
        if (!svg) throw IoError("cannot open " + (out_dir / "report.svg").string());
        svg << render_svg(series);
        if (!svg) throw IoError("short write to " + (out_dir / "report.svg").string());
    }
    std::vector<std::string> records = {Record("report")
                                            .kv("points", points)
                                            .kv("csv", "report.csv")
                                            .kv("svg", "report.svg")
                                            .close(hash)};
    append_metrics(out_dir, records);
    return records;
}

std::vector<std::string> cmd_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    std::error_code ec;
    fs::remove(out_dir / "metrics.txt", ec);

    std::vector<std::string> records = cmd_sample(cfg);
    auto extend = [&records](std::vector<std::string> more) {
        for (std::string& line : more) records.push_back(std::move(line));
    };
    const std::vector<std::string> eval_unpruned =
        cmd_eval(cfg, out_dir / "manifest.json", true);
    extend(eval_unpruned);
    const std::vector<std::string> prune_records =
        cmd_prune_retrain(cfg, out_dir / "manifest.json");
    extend(prune_records);
    const std::vector<std::string> eval_pruned =
        cmd_eval(cfg, out_dir / "pruned_manifest.json", true);
    extend(eval_pruned);
    extend(cmd_report(cfg, out_dir / "metrics.txt"));

    auto find_record = [](const std::vector<std::string>& lines, const std::string& name) {
        for (const std::string& line : lines) {
            auto kv = parse_record(line);
            if (kv.count("record") && kv.at("record") == name) return kv;
        }
        return std::map<std::string, std::string>{};
    };
    const auto unpruned = find_record(eval_unpruned, "eval");
    const auto pruned = find_record(eval_pruned, "eval");
    const auto aggregate = find_record(prune_records, "prune_retrain");
    const std::string metric = unpruned.count("error") ? "error" : "ppl";
    Record summary("pipeline");
    summary.kv("metric", metric);
    if (unpruned.count(metric)) summary.kv("unpruned", unpruned.at(metric));
    if (pruned.count(metric)) summary.kv("pruned", pruned.at(metric));
    if (pruned.count("best_member")) summary.kv("best_member", pruned.at("best_member"));
    if (pruned.count("member_mean")) summary.kv("member_mean", pruned.at("member_mean"));
    if (pruned.count("params_mean")) summary.kv("params_mean", pruned.at("params_mean"));
    if (aggregate.count("dense_params")) summary.kv("dense_params", aggregate.at("dense_params"));
    if (aggregate.count("params_ratio")) summary.kv("params_ratio", aggregate.at("params_ratio"));
    std::vector<std::string> summary_records = {summary.close(hash)};
    append_metrics(out_dir, summary_records);
    records.push_back(summary_records.front());
    return records;
}

}  // namespace sse
