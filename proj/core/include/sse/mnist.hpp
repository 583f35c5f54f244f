#pragma once

#include <filesystem>
#include <vector>

#include "sse/matrix.hpp"

namespace sse {

/// images: N x (rows*cols) pixels scaled to [0,1]; labels in 0..9.
struct MnistDataset {
    Matrix images;
    std::vector<int> labels;
};

/// Parses the big-endian IDX pair (image magic 0x00000803, label magic
/// 0x00000801); pixels are divided by 255. Throws IoError naming the file and
/// byte offset on bad magic, truncation, or image/label count mismatch.
MnistDataset load_mnist_idx(const std::filesystem::path& image_path,
                            const std::filesystem::path& label_path);

}  // namespace sse
