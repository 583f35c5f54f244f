#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sse/params.hpp"

namespace sse {

enum class GroupStrategy {
    FnnOutgoing,
    LstmUntied,
    LstmTiedW,
    LstmIss,
    LstmIssEmbedCols,
    LstmIssSharedEmbed,
};

GroupStrategy strategy_from_string(const std::string& s);
std::string strategy_name(GroupStrategy s);

/// One weight coordinate: `tensor` indexes the tensor_views() enumeration of
/// the model, `index` is the flat row-major offset within that tensor.
struct Coord {
    std::uint32_t tensor = 0;
    std::uint32_t index = 0;

    friend bool operator==(const Coord& a, const Coord& b) {
        return a.tensor == b.tensor && a.index == b.index;
    }
};

struct Group {
    std::vector<Coord> coords;  // unique within the group
    std::size_t dim() const { return coords.size(); }
};

/// Immutable after construction; safe to share read-only across threads.
struct GroupingSpec {
    GroupStrategy strategy = GroupStrategy::FnnOutgoing;
    std::vector<Group> groups;
};

/// Builds the weight groups for a strategy.
///
///   FnnOutgoing        one group per input/hidden neuron: its outgoing
///                      weight row (biases excluded).
///   LstmUntied         per layer, per gate block of W: one group per row
///                      and one per column of that block. Every LSTM weight
///                      lands in exactly 2 groups.
///   LstmTiedW          per layer: one group per row and per column of the
///                      whole (in+n) x 4n W. Every LSTM weight in 2 groups.
///   LstmIss            per hidden unit k of layer l: recurrent row in_l+k of
///                      W(l), gate columns {k, n+k, 2n+k, 3n+k} of W(l)
///                      (intersections with the row deduplicated), the 4 bias
///                      entries at those positions, and row k of W(l+1) — or
///                      row k of the softmax weight for the last layer.
///   LstmIssEmbedCols   LstmIss plus one group per embedding column.
///   LstmIssSharedEmbed LstmIss on shared-embedding storage; the last layer's
///                      "softmax row k" is embedding column k.
///
/// output_groups (untied/tied only): additionally group each embedding column
/// and each softmax-weight row as its own group; on shared storage the
/// embedding column groups cover both roles.
///
/// Throws ConfigError on strategy/architecture mismatch (FNN strategy on an
/// LSTM model and vice versa; LstmIssSharedEmbed requires shared storage, the
/// other ISS variants require split storage).
GroupingSpec build_groups(const ModelParams& model, GroupStrategy strategy,
                          bool output_groups = false);

}  // namespace sse
