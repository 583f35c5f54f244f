#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sse/gsp.hpp"
#include "sse/mask.hpp"
#include "sse/params.hpp"
#include "sse/problem.hpp"
#include "sse/rng.hpp"
#include "sse/schedule.hpp"

namespace sse {

/// Sampler configuration. step_size is the learning rate applied to the
/// mean-loss gradient (mean NLL + lambda * penalty); run_sampling converts it
/// to the per-update discretization eps = 2 * step_size / N so that the
/// injected noise matches the posterior scale implied by that learning rate.
struct SgldConfig {
    double step_size = 0.1;
    bool anneal = false;          // false: constant step size
    double decay_factor = 1.0;    // anneal: divide by this every decay_every epochs
    std::size_t decay_every = 1;
    std::size_t batch_size = 32;  // consumed when the problem is constructed
    std::size_t epochs = 1;
    std::size_t burn_in_epochs = 0;
    std::size_t num_samples = 1;
    double clip_norm = 0.0;       // 0 = off; clips the mean-loss gradient
    double noise_scale = 1.0;     // diagnostic: 0 turns updates into plain SGD
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
    double step_at_epoch(std::size_t epoch_1based) const;
    /// Epochs between snapshots: (epochs - burn_in) / num_samples.
    std::size_t collection_interval() const;
};

struct Snapshot {
    ModelParams params;
    std::size_t epoch = 0;   // 1-based epoch after which it was taken
    double train_nll = 0.0;  // mean NLL over that epoch
};

struct SampleSet {
    std::vector<Snapshot> snapshots;
    SgldConfig config;
    GspConfig gsp;
    bool diverged = false;
    std::string note;
};

/// One update theta <- theta - (eps/2) * grad + noise_scale * xi with
/// xi ~ N(0, eps I), applied to every coordinate. Throws DivergenceError on a
/// nonfinite gradient.
void sgld_step(ModelParams& theta, const ModelParams& grad, double step_size, RngStream& rng,
               double noise_scale = 1.0);

/// The posterior-scale stochastic gradient for one batch:
/// N * d(batch mean NLL)/d(theta) + d(penalty)/d(theta) with the penalty
/// evaluated at the lambda in prior_cfg. prior_groups may be null (no prior).
ModelParams stochastic_grad(TrainingProblem& problem, std::size_t batch_index,
                            const GroupingSpec* prior_groups, const GspConfig& prior_cfg);

/// Stage one: epochs of minibatch SGLD over the problem's data; after
/// burn_in_epochs, a deep-copy snapshot is taken every collection_interval()
/// epochs, num_samples in total. On divergence (nonfinite loss or gradient,
/// or loss above 100x its running median) the run stops, keeping the
/// snapshots collected so far, with diverged set and note explaining why.
SampleSet run_sampling(TrainingProblem& problem, const SgldConfig& cfg,
                       const GroupingSpec* prior_groups, const GspConfig& prior_cfg);

/// Plain SGD on the mean loss (mean NLL + lambda * penalty when prior_groups
/// given). If mask is given, pruned coordinates' gradients are zeroed so they
/// stay exactly 0. Returns per-epoch mean NLL. Throws DivergenceError.
std::vector<double> sgd_train(TrainingProblem& problem, std::size_t epochs,
                              const LrSchedule& schedule, double clip_norm = 0.0,
                              const PruneMask* mask = nullptr,
                              const GroupingSpec* prior_groups = nullptr,
                              const GspConfig& prior_cfg = {});

}  // namespace sse
