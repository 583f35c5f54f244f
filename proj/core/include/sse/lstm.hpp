#pragma once

#include <cstdint>
#include <vector>

#include "sse/dropout.hpp"
#include "sse/matrix.hpp"
#include "sse/params.hpp"
#include "sse/rng.hpp"

namespace sse {

/// One BPTT window of token ids, laid out [t * batch + b]. targets[i] is the
/// next token after inputs[i] in lane b.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t steps = 0;
    std::vector<int> inputs;
    std::vector<int> targets;
};

/// Recurrent state carried across windows: per layer h and c, batch x n_l.
struct LmState {
    std::vector<Matrix> h;
    std::vector<Matrix> c;
};

LmState make_state(const LstmLmParams& p, std::size_t batch);
void reset_state(LmState& s);

/// One cell update on the tied storage. cat = [x | h_prev] (B x (in+n)),
/// w is (in+n) x 4n with post-activation gate blocks [i | u | f | o]
/// (sigmoid, tanh, sigmoid, sigmoid). Outputs:
///   gates  B x 4n   activated gate values
///   c      B x n    f.*c_prev + i.*u
///   tanh_c B x n
///   h      B x n    o.*tanh(c)
void lstm_cell(const Matrix& w, const Matrix& b, const Matrix& cat, const Matrix& c_prev,
               Matrix& gates, Matrix& c, Matrix& tanh_c, Matrix& h);

/// The activation/state half of lstm_cell: gates holds pre-activations
/// (B x 4n) on entry and activated values on exit.
void lstm_activate(Matrix& gates, const Matrix& c_prev, Matrix& c, Matrix& tanh_c, Matrix& h);

struct LstmStepCache {
    std::vector<Matrix> cat;       // per layer, B x (in_l + n_l)
    std::vector<Matrix> gates;     // per layer, B x 4n_l (post-activation)
    std::vector<Matrix> c_prev;    // per layer, B x n_l
    std::vector<Matrix> c;
    std::vector<Matrix> tanh_c;
    std::vector<Matrix> out_mask;  // per layer output dropout mask; empty when off
    Matrix emb_mask;               // embedding-output dropout mask; empty when off
    Matrix top;                    // input to the softmax (dropped top-layer h)
    Matrix probs;                  // B x vocab
};

struct LstmLmCache {
    std::vector<LstmStepCache> steps;
};

/// Runs one window, updating state in place; returns the mean negative log
/// likelihood per target token. Dropout applies to non-recurrent connections
/// only (embedding output and each layer output), resampled every step.
/// Token ids outside [0, vocab) raise std::invalid_argument. When
/// target_probs is given, the probability assigned to each target token is
/// appended in [t * batch + b] order.
double lstm_lm_forward(const LstmLmParams& p, const TokenBatch& batch, LmState& state,
                       LstmLmCache* cache = nullptr, const DropoutSpec& dropout = {},
                       RngStream* rng = nullptr, std::vector<double>* target_probs = nullptr);

/// Accumulates scale * d(mean NLL)/d(theta) into grad; backpropagation is
/// truncated at the window boundary (no gradient into the incoming state).
/// Returns the window's mean NLL.
double lstm_lm_backward(const LstmLmParams& p, const TokenBatch& batch, const LstmLmCache& cache,
                        double scale, LstmLmParams& grad);

}  // namespace sse
