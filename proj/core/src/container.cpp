#include "sse/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

#include "sse/errors.hpp"

namespace sse {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written as little-endian host doubles");

constexpr char kMagic[4] = {'S', 'S', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

using json = nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

class Reader {
  public:
    Reader(std::string bytes, std::filesystem::path path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void expect_magic() {
        if (bytes_.size() < 4 || std::memcmp(bytes_.data(), kMagic, 4) != 0)
            throw IoError("container: " + path_.string() + " has no SSEC magic at offset 0");
        pos_ = 4;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, bytes_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    std::string chunk(std::uint64_t len) {
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }
    void copy_doubles(double* dst, std::uint64_t count) {
        need(count * 8);
        std::memcpy(dst, bytes_.data() + pos_, count * 8);
        pos_ += count * 8;
    }
    void finish() const {
        if (pos_ != bytes_.size())
            throw IoError("container: " + path_.string() + " has trailing bytes at offset " +
                          std::to_string(pos_));
    }

  private:
    void need(std::uint64_t len) const {
        if (pos_ + len > bytes_.size())
            throw IoError("container: " + path_.string() + " truncated at offset " +
                          std::to_string(pos_));
    }
    std::string bytes_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

json arch_json(const ModelParams& params) {
    json arch;
    if (const auto* f = std::get_if<FnnParams>(&params)) {
        arch["kind"] = "fnn";
        arch["dims"] = f->dims;
    } else {
        const auto& p = std::get<LstmLmParams>(params);
        arch["kind"] = "lstm";
        arch["vocab"] = p.vocab;
        arch["emb_dim"] = p.emb_dim;
        arch["hidden"] = p.hidden;
        arch["shared_embedding"] = p.shared_embedding;
    }
    return arch;
}

ModelParams params_from_arch(const json& arch, const std::filesystem::path& path) {
    try {
        const std::string kind = arch.at("kind").get<std::string>();
        if (kind == "fnn") return FnnParams::zeros(arch.at("dims").get<std::vector<std::size_t>>());
        if (kind == "lstm")
            return LstmLmParams::zeros(arch.at("vocab").get<std::size_t>(),
                                       arch.at("emb_dim").get<std::size_t>(),
                                       arch.at("hidden").get<std::vector<std::size_t>>(),
                                       arch.at("shared_embedding").get<bool>());
        throw IoError("container: " + path.string() + " has unknown architecture kind " + kind);
    } catch (const json::exception& e) {
        throw IoError("container: " + path.string() + " has a malformed architecture header: " +
                      e.what());
    }
}

}  // namespace

void save_container(const std::filesystem::path& path, const ModelContainer& container) {
    const auto views = tensor_views(container.params);

    json header;
    header["arch"] = arch_json(container.params);
    header["metadata"] = container.metadata;
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const ConstTensorView& v : views) {
        tensors.push_back({{"name", v.name},
                           {"rows", v.tensor->rows()},
                           {"cols", v.tensor->cols()},
                           {"offset", offset}});
        offset += v.tensor->size();
    }
    header["tensors"] = tensors;
    header["has_mask"] = container.mask.has_value();
    if (container.lists) {
        json lists = json::array();
        for (const MatrixIndexLists& m : container.lists->matrices)
            lists.push_back({{"name", m.name}, {"rows", m.kept_rows}, {"cols", m.kept_cols}});
        header["index_lists"] = lists;
    }
    if (container.mask) check_mask_shape(*container.mask, container.params);
    const std::string header_text = header.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, header_text.size());
    out += header_text;
    put_u64(out, offset);
    for (const ConstTensorView& v : views) {
        const auto& flat = v.tensor->flat();
        const std::size_t old = out.size();
        out.resize(old + flat.size() * 8);
        std::memcpy(out.data() + old, flat.data(), flat.size() * 8);
    }
    std::uint64_t mask_bytes = 0;
    if (container.mask)
        for (const auto& kept : container.mask->kept) mask_bytes += kept.size();
    put_u64(out, mask_bytes);
    if (container.mask)
        for (const auto& kept : container.mask->kept)
            out.append(reinterpret_cast<const char*>(kept.data()), kept.size());

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("container: cannot open " + path.string() + " for writing");
    file.write(out.data(), std::streamsize(out.size()));
    if (!file) throw IoError("container: short write to " + path.string());
}

ModelContainer load_container(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("container: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path);
    r.expect_magic();
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("container: " + path.string() + " has unsupported version " +
                      std::to_string(version));
    json header;
    try {
        header = json::parse(r.chunk(r.u64()));
    } catch (const json::exception& e) {
        throw IoError("container: " + path.string() + " header is not valid JSON: " + e.what());
    }

    ModelContainer out;
    out.params = params_from_arch(header.at("arch"), path);
    auto views = tensor_views(out.params);

    try {
        const json& tensors = header.at("tensors");
        if (tensors.size() != views.size())
            throw IoError("container: " + path.string() + " tensor table size mismatch");
        std::uint64_t expect_offset = 0;
        for (std::size_t i = 0; i < views.size(); ++i) {
            const json& t = tensors.at(i);
            if (t.at("name").get<std::string>() != views[i].name ||
                t.at("rows").get<std::size_t>() != views[i].tensor->rows() ||
                t.at("cols").get<std::size_t>() != views[i].tensor->cols() ||
                t.at("offset").get<std::uint64_t>() != expect_offset)
                throw IoError("container: " + path.string() + " tensor table entry " +
                              std::to_string(i) + " disagrees with the architecture");
            expect_offset += views[i].tensor->size();
        }
        const std::uint64_t payload = r.u64();
        if (payload != expect_offset)
            throw IoError("container: " + path.string() + " payload holds " +
                          std::to_string(payload) + " doubles, header promises " +
                          std::to_string(expect_offset));
        for (TensorView& v : views) r.copy_doubles(v.tensor->flat().data(), v.tensor->size());

        const std::uint64_t mask_bytes = r.u64();
        if (header.at("has_mask").get<bool>()) {
            PruneMask mask;
            std::uint64_t total = 0;
            for (const TensorView& v : views) total += v.tensor->size();
            if (mask_bytes != total)
                throw IoError("container: " + path.string() + " mask section size mismatch");
            for (const TensorView& v : views) {
                const std::string raw = r.chunk(v.tensor->size());
                mask.kept.emplace_back(raw.begin(), raw.end());
            }
            out.mask = std::move(mask);
        } else if (mask_bytes != 0) {
            throw IoError("container: " + path.string() + " unexpected mask section");
        }

        if (header.contains("index_lists")) {
            IndexLists lists;
            for (const json& m : header.at("index_lists")) {
                MatrixIndexLists entry;
                entry.name = m.at("name").get<std::string>();
                entry.kept_rows = m.at("rows").get<std::vector<std::size_t>>();
                entry.kept_cols = m.at("cols").get<std::vector<std::size_t>>();
                lists.matrices.push_back(std::move(entry));
            }
            out.lists = std::move(lists);
        }
        for (const auto& [key, value] : header.at("metadata").items())
            out.metadata.emplace(key, value.get<std::string>());
    } catch (const json::exception& e) {
        throw IoError("container: " + path.string() + " has a malformed header: " + e.what());
    }
    r.finish();
    return out;
}

}  // namespace sse
