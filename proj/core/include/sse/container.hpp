#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sse/mask.hpp"
#include "sse/params.hpp"
#include "sse/pruning.hpp"

namespace sse {

/// On-disk model checkpoint: an architecture header plus named tensors as
/// little-endian 64-bit reals, with optional prune-mask and index-list
/// sections and free-form string metadata. save/load round-trips are
/// bit-identical; the format version is checked on load.
struct ModelContainer {
    ModelParams params;
    std::map<std::string, std::string> metadata;
    std::optional<PruneMask> mask;
    std::optional<IndexLists> lists;
};

void save_container(const std::filesystem::path& path, const ModelContainer& container);

/// Throws IoError on missing file, bad magic, unsupported version, or any
/// structural mismatch between header and payload.
ModelContainer load_container(const std::filesystem::path& path);

}  // namespace sse
