#include "sse/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sse/errors.hpp"

namespace sse {
namespace {

constexpr const char* kUnk = "<unk>";
constexpr const char* kEos = "<eos>";

/// Whitespace tokens of one split, with <eos> appended after every line.
std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream words(line);
        std::string w;
        while (words >> w) tokens.push_back(w);
        tokens.push_back(kEos);
    }
    return tokens;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("corpus: cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<int> encode(const TextCorpus& corpus, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(corpus.lookup(t));
    return ids;
}

}  // namespace

int TextCorpus::lookup(const std::string& token) const {
    const auto it = token_to_id.find(token);
    return it == token_to_id.end() ? 0 : it->second;
}

TextCorpus build_corpus_from_text(const std::string& train_text, const std::string& valid_text,
                                  const std::string& test_text, std::size_t vocab_limit) {
    const auto train_tokens = tokenize(train_text);
    if (train_tokens.empty()) throw IoError("corpus: empty training text");
    if (vocab_limit != 0 && vocab_limit < 2)
        throw ConfigError("corpus: vocab_limit must leave room for <unk> and <eos>");

    std::unordered_map<std::string, std::size_t> freq;
    for (const std::string& t : train_tokens)
        if (t != kEos) ++freq[t];

    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    TextCorpus corpus;
    corpus.id_to_token = {kUnk, kEos};
    for (const auto& [token, count] : ranked) {
        if (vocab_limit != 0 && corpus.id_to_token.size() >= vocab_limit) break;
        corpus.id_to_token.push_back(token);
    }
    for (std::size_t i = 0; i < corpus.id_to_token.size(); ++i)
        corpus.token_to_id.emplace(corpus.id_to_token[i], int(i));

    corpus.train = encode(corpus, train_tokens);
    corpus.valid = encode(corpus, tokenize(valid_text));
    corpus.test = encode(corpus, tokenize(test_text));
    return corpus;
}

TextCorpus build_corpus(const std::filesystem::path& train_path,
                        const std::filesystem::path& valid_path,
                        const std::filesystem::path& test_path, std::size_t vocab_limit) {
    return build_corpus_from_text(read_text(train_path), read_text(valid_path),
                                  read_text(test_path), vocab_limit);
}

std::vector<TokenBatch> bptt_batches(const std::vector<int>& ids, std::size_t batch,
                                     std::size_t unroll) {
    if (batch == 0 || unroll == 0) throw ConfigError("bptt_batches: batch and unroll must be >= 1");
    const std::size_t stream_len = ids.size() / batch;
    if (stream_len < unroll + 1)
        throw ConfigError("bptt_batches: split too short for the requested batch/unroll");
    const std::size_t windows = (stream_len - 1) / unroll;

    std::vector<TokenBatch> out(windows);
    for (std::size_t k = 0; k < windows; ++k) {
        TokenBatch& tb = out[k];
        tb.batch = batch;
        tb.steps = unroll;
        tb.inputs.resize(batch * unroll);
        tb.targets.resize(batch * unroll);
        for (std::size_t t = 0; t < unroll; ++t)
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t pos = b * stream_len + k * unroll + t;
                tb.inputs[t * batch + b] = ids[pos];
                tb.targets[t * batch + b] = ids[pos + 1];
            }
    }
    return out;
}

}  // namespace sse
