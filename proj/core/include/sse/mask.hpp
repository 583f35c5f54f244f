#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sse/params.hpp"

namespace sse {

/// Boolean keep/prune flags aligned with the tensor_views() enumeration of a
/// model; 1 = kept. Bias tensors are always all-kept (biases are never
/// magnitude-pruned).
struct PruneMask {
    std::vector<std::vector<std::uint8_t>> kept;

    static PruneMask all_kept(const ModelParams& m) {
        PruneMask mask;
        for (ConstTensorView v : tensor_views(m))
            mask.kept.emplace_back(v.tensor->size(), std::uint8_t(1));
        return mask;
    }
};

inline void check_mask_shape(const PruneMask& mask, const ModelParams& m) {
    const auto views = tensor_views(m);
    if (mask.kept.size() != views.size())
        throw std::invalid_argument("PruneMask: tensor count mismatch");
    for (std::size_t i = 0; i < views.size(); ++i)
        if (mask.kept[i].size() != views[i].tensor->size())
            throw std::invalid_argument("PruneMask: size mismatch at " + views[i].name);
}

/// Zeroes every pruned coordinate of m (used on gradients during masked
/// training and on parameters when applying a loaded mask).
inline void zero_masked(const PruneMask& mask, ModelParams& m) {
    check_mask_shape(mask, m);
    auto views = tensor_views(m);
    for (std::size_t i = 0; i < views.size(); ++i) {
        auto flat = views[i].tensor->flat();
        for (std::size_t k = 0; k < flat.size(); ++k)
            if (!mask.kept[i][k]) flat[k] = 0.0;
    }
}

/// True when every pruned coordinate of m is exactly 0.
inline bool mask_consistent(const PruneMask& mask, const ModelParams& m) {
    check_mask_shape(mask, m);
    const auto views = tensor_views(m);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& flat = views[i].tensor->flat();
        for (std::size_t k = 0; k < flat.size(); ++k)
            if (!mask.kept[i][k] && flat[k] != 0.0) return false;
    }
    return true;
}

}  // namespace sse
