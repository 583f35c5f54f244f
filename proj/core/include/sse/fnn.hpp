#pragma once

#include <cstdint>
#include <vector>

#include "sse/dropout.hpp"
#include "sse/matrix.hpp"
#include "sse/params.hpp"
#include "sse/rng.hpp"

namespace sse {

/// Intermediate state of one forward pass, consumed by fnn_backward.
struct FnnCache {
    std::vector<Matrix> activations;  // activations[0] = input, then post-ReLU layers
    std::vector<Matrix> pre_act;      // pre-activation of each hidden layer
    std::vector<Matrix> drop_masks;   // per hidden layer; empty when dropout inactive
    Matrix logits;
    Matrix probs;
};

/// Hidden layers use ReLU; the last layer is linear (softmax applied to its
/// logits). Dropout, when active, is applied to each post-ReLU hidden
/// activation. rng may be null when dropout is inactive.
Matrix fnn_forward(const FnnParams& p, const Matrix& input, FnnCache* cache = nullptr,
                   const DropoutSpec& dropout = {}, RngStream* rng = nullptr);

/// Mean cross-entropy of the rows of `input` against integer labels.
double fnn_loss(const FnnParams& p, const Matrix& input, const std::vector<int>& labels);

/// Accumulates scale * d(mean cross-entropy)/d(theta) into grad. Returns the
/// mean cross-entropy of the batch the cache was produced from.
double fnn_backward(const FnnParams& p, const FnnCache& cache, const std::vector<int>& labels,
                    double scale, FnnParams& grad);

/// argmax class per row; ties resolve to the lowest class id.
std::vector<int> predict_classes(const Matrix& probs);

double classification_error(const Matrix& probs, const std::vector<int>& labels);

}  // namespace sse
