#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "sse/lstm.hpp"

namespace sse {

/// Whitespace-tokenized corpus with a train-built vocabulary. Reserved ids:
/// <unk> = 0 (out-of-vocabulary fallback), <eos> = 1 (appended per line).
struct TextCorpus {
    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;
    std::vector<int> train, valid, test;

    std::size_t vocab_size() const { return id_to_token.size(); }
    int lookup(const std::string& token) const;
};

/// Builds the vocabulary from the train split only (frequency descending,
/// lexicographic tie-break), optionally capped at vocab_limit total entries
/// (reserved tokens included); out-of-vocabulary tokens map to <unk>.
/// Throws IoError on missing files or an empty training file.
TextCorpus build_corpus(const std::filesystem::path& train_path,
                        const std::filesystem::path& valid_path,
                        const std::filesystem::path& test_path, std::size_t vocab_limit = 0);

/// Same construction from in-memory text (used by generators and tests).
TextCorpus build_corpus_from_text(const std::string& train_text, const std::string& valid_text,
                                  const std::string& test_text, std::size_t vocab_limit = 0);

/// Contiguous truncated-BPTT batching: the id sequence is split into B equal
/// streams ("batch lanes"); window k covers steps [k*T, (k+1)*T) of every
/// lane with targets shifted one ahead. Total targets emitted:
/// B * floor((floor(len/B) - 1) / T) * T. Throws ConfigError on sizes too
/// small to emit one window.
std::vector<TokenBatch> bptt_batches(const std::vector<int>& ids, std::size_t batch,
                                     std::size_t unroll);

}  // namespace sse
