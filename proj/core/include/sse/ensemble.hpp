#pragma once

#include <vector>

#include "sse/fnn.hpp"
#include "sse/lstm.hpp"
#include "sse/params.hpp"

namespace sse {

/// Arithmetic mean of the members' softmax outputs (probability space); rows
/// are valid distributions. All members must be FNNs with matching input and
/// class dimensions. A single member reproduces its own prediction exactly.
Matrix ensemble_probs(const std::vector<ModelParams>& members, const Matrix& inputs);

/// Fraction of argmax-of-averaged-probabilities mispredictions; argmax ties
/// resolve to the lowest class id.
double ensemble_classification_error(const std::vector<ModelParams>& members, const Matrix& inputs,
                                     const std::vector<int>& labels);

/// exp(mean over tokens of -log p_bar(y_t)) where p_bar is the member-mixture
/// probability; every member walks the same contiguous windows with its own
/// recurrent state (reset at the start). All members must be LSTM LMs over
/// the same vocabulary.
double ensemble_perplexity(const std::vector<ModelParams>& members,
                           const std::vector<TokenBatch>& windows);

/// Perplexity of the first 1..M member prefixes in one pass (curve data for
/// members-vs-quality sweeps); back() equals ensemble_perplexity of all.
std::vector<double> ensemble_perplexity_curve(const std::vector<ModelParams>& members,
                                              const std::vector<TokenBatch>& windows);

/// Classification-error curve over member prefixes 1..M.
std::vector<double> ensemble_error_curve(const std::vector<ModelParams>& members,
                                         const Matrix& inputs, const std::vector<int>& labels);

}  // namespace sse
