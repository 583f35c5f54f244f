#include "sse/gsp.hpp"

#include <cmath>
#include <stdexcept>

namespace sse {
namespace {

std::vector<const double*> flat_bases(const ModelParams& m) {
    std::vector<const double*> bases;
    for (ConstTensorView v : tensor_views(m)) bases.push_back(v.tensor->flat().data());
    return bases;
}

std::vector<double*> flat_bases(ModelParams& m) {
    std::vector<double*> bases;
    for (TensorView v : tensor_views(m)) bases.push_back(v.tensor->flat().data());
    return bases;
}

}  // namespace

double gsp_penalty(const ModelParams& model, const GroupingSpec& spec, const GspConfig& cfg) {
    if (cfg.lambda == 0.0) return 0.0;
    const auto bases = flat_bases(model);
    double total = 0.0;
    for (const Group& g : spec.groups) {
        double ss = 0.0;
        for (const Coord& c : g.coords) {
            const double w = bases[c.tensor][c.index];
            ss += w * w;
        }
        total += std::sqrt(double(g.dim())) * std::sqrt(ss);
    }
    return cfg.lambda * total;
}

double gsp_log_prior(const ModelParams& model, const GroupingSpec& spec, const GspConfig& cfg) {
    return -gsp_penalty(model, spec, cfg);
}

void gsp_gradient_accumulate(const ModelParams& model, const GroupingSpec& spec,
                             const GspConfig& cfg, ModelParams& grad) {
    if (cfg.lambda == 0.0) return;
    const auto bases = flat_bases(model);
    const auto gbases = flat_bases(grad);
    if (gbases.size() != bases.size())
        throw std::invalid_argument("gsp_gradient_accumulate: grad structure mismatch");
    const double eps2 = cfg.norm_epsilon * cfg.norm_epsilon;
    for (const Group& g : spec.groups) {
        double ss = 0.0;
        for (const Coord& c : g.coords) {
            const double w = bases[c.tensor][c.index];
            ss += w * w;
        }
        const double denom = std::sqrt(ss + eps2);
        if (denom == 0.0) continue;
        const double coef = cfg.lambda * std::sqrt(double(g.dim())) / denom;
        for (const Coord& c : g.coords) gbases[c.tensor][c.index] += coef * bases[c.tensor][c.index];
    }
}

}  // namespace sse
