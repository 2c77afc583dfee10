#include "macft/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "macft/common.hpp"

namespace macft {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'F', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    check(is.good(), "truncated checkpoint file: ", path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    check(is.good(), "truncated checkpoint file: ", path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamRefs& params) {
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot open checkpoint for writing: ", path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u64(os, params.size());
    for (const Param* p : params) {
        put_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u64(os, static_cast<std::uint64_t>(p->value.rank()));
        for (int i = 0; i < p->value.rank(); ++i)
            put_u64(os, static_cast<std::uint64_t>(p->value.dim(i)));
        for (std::size_t i = 0; i < p->value.size(); ++i) put_f64(os, p->value[i]);
    }
    os.flush();
    check(os.good(), "write failure on checkpoint: ", path);
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.good(), "cannot open checkpoint: ", path);
    char magic[8];
    is.read(magic, 8);
    check(is.good() && std::memcmp(magic, kMagic, 8) == 0, "bad checkpoint magic in ", path);
    const std::uint32_t version = get_u32(is, path);
    check(version == kVersion, "unsupported checkpoint version ", version, " in ", path);
    const std::uint64_t count = get_u64(is, path);
    std::map<std::string, Tensor> out;
    for (std::uint64_t t = 0; t < count; ++t) {
        const std::uint64_t name_len = get_u64(is, path);
        check(name_len > 0 && name_len < 4096, "implausible tensor name length in ", path);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        check(is.good(), "truncated checkpoint file: ", path);
        const std::uint64_t rank = get_u64(is, path);
        check(rank >= 1 && rank <= 8, "implausible tensor rank in ", path);
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const std::uint64_t d = get_u64(is, path);
            check(d > 0 && d < (1ull << 32), "implausible tensor dim in ", path);
            shape[i] = static_cast<int>(d);
            numel *= d;
        }
        Tensor tensor(shape);
        for (std::size_t i = 0; i < numel; ++i) {
            const std::uint64_t bits = get_u64(is, path);
            std::memcpy(&tensor[i], &bits, 8);
        }
        check(out.emplace(std::move(name), std::move(tensor)).second,
              "duplicate tensor name in ", path);
    }
    return out;
}

void load_checkpoint(const std::string& path, const ParamRefs& params, bool strict) {
    auto tensors = read_checkpoint(path);
    std::set<std::string> used;
    for (Param* p : params) {
        auto it = tensors.find(p->name);
        check(it != tensors.end(), "checkpoint ", path, " is missing tensor ", p->name);
        check(it->second.same_shape(p->value), "checkpoint tensor ", p->name, " has shape ",
              it->second.shape_str(), " but the model expects ", p->value.shape_str());
        p->value.values() = it->second.values();
        used.insert(p->name);
    }
    if (strict) {
        for (const auto& [name, tensor] : tensors)
            check(used.count(name) != 0, "checkpoint ", path, " has unexpected tensor ", name);
    }
}

}  // namespace macft
