#include "sse/sgld.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sse/errors.hpp"

namespace sse {
namespace {

/// Loss-trajectory divergence guard: triggers on nonfinite values, or on a
/// value exceeding 100x the running median once enough history exists. The
/// ratio test alone misfires when a well-fit model reaches a tiny loss and a
/// noisy batch lands at an ordinary absolute level, so the jump must also
/// clear the median by 10 nats; genuine explosions overshoot by hundreds.
class DivergenceGuard {
  public:
    // Returns a non-empty description when training has diverged.
    std::string check(double loss) {
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "nonfinite loss " << loss;
            return os.str();
        }
        if (history_.size() >= 20) {
            std::vector<double> copy = history_;
            const std::size_t mid = copy.size() / 2;
            std::nth_element(copy.begin(), copy.begin() + mid, copy.end());
            const double median = copy[mid];
            if (median > 0.0 && loss > 100.0 * median && loss > median + 10.0) {
                std::ostringstream os;
                os << "loss " << loss << " exceeds 100x running median " << median;
                return os.str();
            }
        }
        history_.push_back(loss);
        return {};
    }

  private:
    std::vector<double> history_;
};

}  // namespace

void SgldConfig::validate() const {
    if (!(step_size > 0.0)) throw ConfigError("SgldConfig: step_size must be > 0");
    if (anneal && !(decay_factor >= 1.0)) throw ConfigError("SgldConfig: decay_factor must be >= 1");
    if (anneal && decay_every == 0) throw ConfigError("SgldConfig: decay_every must be >= 1");
    if (batch_size == 0) throw ConfigError("SgldConfig: batch_size must be >= 1");
    if (epochs == 0) throw ConfigError("SgldConfig: epochs must be >= 1");
    if (burn_in_epochs >= epochs) throw ConfigError("SgldConfig: burn_in must be < epochs");
    if (num_samples == 0) throw ConfigError("SgldConfig: num_samples must be >= 1");
    if ((epochs - burn_in_epochs) / num_samples == 0)
        throw ConfigError("SgldConfig: need (epochs - burn_in) / num_samples >= 1");
    if (!(clip_norm >= 0.0)) throw ConfigError("SgldConfig: clip_norm must be >= 0");
    if (!(noise_scale >= 0.0)) throw ConfigError("SgldConfig: noise_scale must be >= 0");
}

double SgldConfig::step_at_epoch(std::size_t epoch_1based) const {
    if (!anneal) return step_size;
    return step_size / std::pow(decay_factor, double((epoch_1based - 1) / decay_every));
}

std::size_t SgldConfig::collection_interval() const {
    return (epochs - burn_in_epochs) / num_samples;
}

void sgld_step(ModelParams& theta, const ModelParams& grad, double step_size, RngStream& rng,
               double noise_scale) {
    if (!(step_size > 0.0)) throw std::invalid_argument("sgld_step: step_size must be > 0");
    if (!all_finite(grad)) throw DivergenceError("sgld_step: nonfinite gradient");
    const double drift = -0.5 * step_size;
    const double noise_std = noise_scale * std::sqrt(step_size);
    auto tv = tensor_views(theta);
    auto gv = tensor_views(grad);
    if (tv.size() != gv.size()) throw std::invalid_argument("sgld_step: grad structure mismatch");
    for (std::size_t i = 0; i < tv.size(); ++i) {
        auto t = tv[i].tensor->flat();
        const auto& g = gv[i].tensor->flat();
        if (t.size() != g.size())
            throw std::invalid_argument("sgld_step: tensor mismatch at " + tv[i].name);
        for (std::size_t k = 0; k < t.size(); ++k)
            t[k] += drift * g[k] + noise_std * rng.next_gaussian(0.0, 1.0);
    }
}

ModelParams stochastic_grad(TrainingProblem& problem, std::size_t batch_index,
                            const GroupingSpec* prior_groups, const GspConfig& prior_cfg) {
    ModelParams grad = zeros_like(problem.params());
    problem.batch_gradient(batch_index, double(problem.dataset_size()), grad);
    if (prior_groups) gsp_gradient_accumulate(problem.params(), *prior_groups, prior_cfg, grad);
    return grad;
}

SampleSet run_sampling(TrainingProblem& problem, const SgldConfig& cfg,
                       const GroupingSpec* prior_groups, const GspConfig& prior_cfg) {
    cfg.validate();
    SampleSet out;
    out.config = cfg;
    out.gsp = prior_cfg;

    const std::size_t N = problem.dataset_size();
    const std::size_t interval = cfg.collection_interval();
    RngStream rng(cfg.seed);
    ModelParams grad = zeros_like(problem.params());
    DivergenceGuard guard;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double eta = cfg.step_at_epoch(epoch);
        const double eps = 2.0 * eta / double(N);
        problem.begin_epoch(epoch - 1);
        double epoch_nll = 0.0;
        const std::size_t batches = problem.batch_count();
        for (std::size_t b = 0; b < batches; ++b) {
            set_zero(grad);
            const double nll = problem.batch_gradient(b, 1.0, grad);
            if (prior_groups) gsp_gradient_accumulate(problem.params(), *prior_groups, prior_cfg, grad);
            if (cfg.clip_norm > 0.0) clip_global_norm(grad, cfg.clip_norm);
            const std::string why = guard.check(nll);
            if (!why.empty()) {
                out.diverged = true;
                std::ostringstream os;
                os << "diverged at epoch " << epoch << " batch " << b << ": " << why;
                out.note = os.str();
                return out;
            }
            epoch_nll += nll;
            scale(grad, double(N));
            try {
                sgld_step(problem.params(), grad, eps, rng, cfg.noise_scale);
            } catch (const DivergenceError& e) {
                out.diverged = true;
                std::ostringstream os;
                os << "diverged at epoch " << epoch << " batch " << b << ": " << e.what();
                out.note = os.str();
                return out;
            }
        }
        epoch_nll /= double(batches);
        if (epoch > cfg.burn_in_epochs && (epoch - cfg.burn_in_epochs) % interval == 0 &&
            out.snapshots.size() < cfg.num_samples) {
            out.snapshots.push_back(Snapshot{problem.params(), epoch, epoch_nll});
        }
    }
    return out;
}

std::vector<double> sgd_train(TrainingProblem& problem, std::size_t epochs,
                              const LrSchedule& schedule, double clip_norm,
                              const PruneMask* mask, const GroupingSpec* prior_groups,
                              const GspConfig& prior_cfg) {
    schedule.validate();
    if (mask) check_mask_shape(*mask, problem.params());
    std::vector<double> epoch_nll;
    ModelParams grad = zeros_like(problem.params());
    DivergenceGuard guard;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const double lr = schedule.at_epoch(epoch);
        problem.begin_epoch(epoch);
        double total = 0.0;
        const std::size_t batches = problem.batch_count();
        for (std::size_t b = 0; b < batches; ++b) {
            set_zero(grad);
            const double nll = problem.batch_gradient(b, 1.0, grad);
            if (prior_groups) gsp_gradient_accumulate(problem.params(), *prior_groups, prior_cfg, grad);
            const std::string why = guard.check(nll);
            if (!why.empty()) {
                std::ostringstream os;
                os << "sgd_train diverged at epoch " << epoch + 1 << " batch " << b << ": " << why;
                throw DivergenceError(os.str());
            }
            if (!all_finite(grad)) {
                std::ostringstream os;
                os << "sgd_train diverged at epoch " << epoch + 1 << " batch " << b
                   << ": nonfinite gradient";
                throw DivergenceError(os.str());
            }
            total += nll;
            if (mask) zero_masked(*mask, grad);
            if (clip_norm > 0.0) clip_global_norm(grad, clip_norm);
            axpy(-lr, grad, problem.params());
        }
        epoch_nll.push_back(total / double(batches));
    }
    return epoch_nll;
}

}  // namespace sse
