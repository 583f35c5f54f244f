#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sse/fnn.hpp"
#include "sse/grouping.hpp"
#include "sse/lstm.hpp"
#include "sse/mask.hpp"
#include "sse/params.hpp"
#include "sse/problem.hpp"
#include "sse/schedule.hpp"
#include "sse/sgld.hpp"

namespace sse {

/// Global magnitude threshold over all weight tensors (biases excluded,
/// embedding included): tau = the k-th smallest |w| with
/// k = floor(target_sparsity * count); pruning |w| <= tau reaches at least
/// the target, ties pruned together. target 0 returns a value below min |w|.
double compute_threshold(const ModelParams& model, double target_sparsity);

/// Zeroes every weight with |w| <= threshold; returns the mask (biases stay
/// all-kept).
PruneMask prune(ModelParams& model, double threshold);

/// Kept-row/kept-column ids of one matrix view.
struct MatrixIndexLists {
    std::string name;
    std::vector<std::size_t> kept_rows;
    std::vector<std::size_t> kept_cols;
};
struct IndexLists {
    std::vector<MatrixIndexLists> matrices;
    const MatrixIndexLists* find(const std::string& name) const;
};

/// Kept rows/columns of every compute matrix, at the granularity the strategy
/// trains at: fnn-outgoing → one pair per layer matrix; lstm-tied → one pair
/// per layer W plus the softmax matrix; lstm-untied → per layer, eight pairs
/// (x- and h-rows of each gate block, block-local column ids) plus the
/// softmax matrix. On shared storage the "softmax.w" view is the transposed
/// embedding (rows = embedding columns). ISS strategies use
/// extract_reduced_lstm instead. Throws on mask/model inconsistency (a pruned
/// coordinate holding a nonzero value).
IndexLists extract_index_lists(const ModelParams& model, const PruneMask& mask,
                               GroupStrategy strategy);

/// Dense re-materialization with pruned units removed. A unit is removable
/// when every weight coordinate of its group is exactly 0 (its bias entries,
/// never magnitude-pruned, are dropped with it — they feed gates nothing else
/// reads). Embedding columns are dropped when all-zero (lstm-iss-embed) or
/// with their unit (lstm-iss-se); the matching input rows of the first
/// layer's W are dropped too, exact because those inputs are identically 0.
struct ReducedLstm {
    LstmLmParams params;
    std::vector<std::size_t> kept_embed;               // embedding columns kept
    std::vector<std::vector<std::size_t>> kept_units;  // per layer: unit ids kept
};
ReducedLstm extract_reduced_lstm(const LstmLmParams& model, const PruneMask& mask,
                                 GroupStrategy strategy);

struct SparsityReport {
    std::size_t total_params = 0;    // all weight-tensor entries (biases excluded)
    std::size_t nonzero_params = 0;
    double sparsity = 0.0;
    std::vector<std::pair<std::string, std::size_t>> matrix_flops;
    std::size_t total_flops = 0;
    std::vector<std::size_t> reduced_sizes;  // ISS only: embedding then hidden sizes
};

/// FLOPs per compute matrix: 2 * |nonzero rows| * |nonzero cols|
/// (multiply-add convention), summed over layer matrices and the softmax
/// matrix; the embedding lookup is excluded. Scans the model's zero pattern.
SparsityReport count_flops(const ModelParams& model);
/// Same accounting from index lists: 2 * |kept_rows| * |kept_cols| per view.
SparsityReport count_flops(const ModelParams& model, const IndexLists& lists);
/// Report for a reduced model, with reduced_sizes filled in.
SparsityReport reduced_report(const ReducedLstm& reduced);

/// Masked MAP retraining: sgd_train with the mask (and optional prior);
/// requires the problem's parameters to already satisfy the mask. Returns the
/// retrained parameters.
ModelParams retrain(TrainingProblem& problem, const PruneMask& mask, std::size_t epochs,
                    const LrSchedule& schedule, double clip_norm = 0.0,
                    const GroupingSpec* prior_groups = nullptr, const GspConfig& prior_cfg = {});

/// Forward passes computed through the kept rows/columns only; equal to the
/// masked dense forward to machine precision.
Matrix fnn_forward_lists(const FnnParams& p, const IndexLists& lists, const Matrix& input);
double lstm_lm_forward_lists(const LstmLmParams& p, const IndexLists& lists,
                             const TokenBatch& batch, LmState& state,
                             std::vector<double>* target_probs = nullptr);

}  // namespace sse
