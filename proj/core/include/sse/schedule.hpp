#pragma once

#include <cmath>
#include <cstdint>

#include "sse/errors.hpp"

namespace sse {

/// Step-decay learning-rate schedule: the rate is divided by decay_factor
/// every decay_every epochs (epoch indices are 0-based).
struct LrSchedule {
    double initial = 0.1;
    double decay_factor = 1.0;
    std::size_t decay_every = 1;

    void validate() const {
        if (!(initial >= 0.0)) throw ConfigError("LrSchedule: initial rate must be >= 0");
        if (!(decay_factor >= 1.0)) throw ConfigError("LrSchedule: decay_factor must be >= 1");
        if (decay_every == 0) throw ConfigError("LrSchedule: decay_every must be >= 1");
    }
    double at_epoch(std::size_t epoch) const {
        return initial / std::pow(decay_factor, double(epoch / decay_every));
    }
};

}  // namespace sse
