#pragma once

#include "sse/grouping.hpp"
#include "sse/params.hpp"

namespace sse {

/// Group sparse prior configuration. The gradient divides by
/// sqrt(|theta_g|^2 + norm_epsilon^2); with the default 0 an exactly-zero
/// group contributes an exact 0 (subgradient choice) and nonzero groups are
/// unaffected.
struct GspConfig {
    double lambda = 0.0;
    double norm_epsilon = 0.0;
};

/// lambda * sum_g sqrt(dim(theta_g)) * ||theta_g||_2
double gsp_penalty(const ModelParams& model, const GroupingSpec& spec, const GspConfig& cfg);

/// Unnormalized log prior density: -gsp_penalty (constant log Z omitted).
double gsp_log_prior(const ModelParams& model, const GroupingSpec& spec, const GspConfig& cfg);

/// Adds the penalty gradient lambda * sqrt(dim) * theta_g / ||theta_g||_2 for
/// every group into grad; overlapping groups accumulate additively.
void gsp_gradient_accumulate(const ModelParams& model, const GroupingSpec& spec,
                             const GspConfig& cfg, ModelParams& grad);

}  // namespace sse
