#pragma once

#include <stdexcept>

namespace sse {

/// Inverted dropout: each kept activation is scaled by 1/keep_prob at train
/// time so evaluation needs no rescaling. keep_prob == 1 disables dropout.
/// For the LSTM it is applied to non-recurrent connections only (embedding
/// output and each layer's output), never to the h/c recurrence.
struct DropoutSpec {
    double keep_prob = 1.0;

    bool active() const { return keep_prob < 1.0; }
    void validate() const {
        if (!(keep_prob > 0.0) || keep_prob > 1.0)
            throw std::invalid_argument("DropoutSpec: keep_prob must be in (0, 1]");
    }
};

}  // namespace sse
