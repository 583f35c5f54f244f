#include "sse/mnist.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "sse/errors.hpp"

namespace sse {
namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("mnist: cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset,
                   const std::filesystem::path& path) {
    if (offset + 4 > b.size()) {
        std::ostringstream os;
        os << "mnist: " << path.string() << " truncated at offset " << offset;
        throw IoError(os.str());
    }
    return (std::uint32_t(b[offset]) << 24) | (std::uint32_t(b[offset + 1]) << 16) |
           (std::uint32_t(b[offset + 2]) << 8) | std::uint32_t(b[offset + 3]);
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
    if (got != want) {
        std::ostringstream os;
        os << "mnist: " << path.string() << " bad magic 0x" << std::hex << got << " at offset 0 "
           << "(expected 0x" << want << ")";
        throw IoError(os.str());
    }
}

}  // namespace

MnistDataset load_mnist_idx(const std::filesystem::path& image_path,
                            const std::filesystem::path& label_path) {
    const auto ibytes = read_all(image_path);
    check_magic(be32(ibytes, 0, image_path), 0x00000803u, image_path);
    const std::size_t count = be32(ibytes, 4, image_path);
    const std::size_t rows = be32(ibytes, 8, image_path);
    const std::size_t cols = be32(ibytes, 12, image_path);
    const std::size_t pixels = rows * cols;
    if (ibytes.size() != 16 + count * pixels) {
        std::ostringstream os;
        os << "mnist: " << image_path.string() << " holds " << ibytes.size() - 16
           << " pixel bytes, header promises " << count * pixels;
        throw IoError(os.str());
    }

    const auto lbytes = read_all(label_path);
    check_magic(be32(lbytes, 0, label_path), 0x00000801u, label_path);
    const std::size_t lcount = be32(lbytes, 4, label_path);
    if (lbytes.size() != 8 + lcount) {
        std::ostringstream os;
        os << "mnist: " << label_path.string() << " holds " << lbytes.size() - 8
           << " label bytes, header promises " << lcount;
        throw IoError(os.str());
    }
    if (lcount != count) {
        std::ostringstream os;
        os << "mnist: image count " << count << " != label count " << lcount;
        throw IoError(os.str());
    }

    MnistDataset ds;
    ds.images = Matrix(count, pixels);
    for (std::size_t i = 0; i < count; ++i) {
        double* row = ds.images.row(i);
        const unsigned char* src = ibytes.data() + 16 + i * pixels;
        for (std::size_t j = 0; j < pixels; ++j) row[j] = double(src[j]) / 255.0;
    }
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char v = lbytes[8 + i];
        if (v > 9) {
            std::ostringstream os;
            os << "mnist: " << label_path.string() << " label " << int(v) << " out of range at index "
               << i;
            throw IoError(os.str());
        }
        ds.labels[i] = int(v);
    }
    return ds;
}

}  // namespace sse
