#include "core/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "core/errors.hpp"

namespace chromo {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("checkpoint: cannot open for write: " + tmp);
        os.write(kMagic, 4);
        put<uint32_t>(os, kVersion);
        put<uint64_t>(os, ck.meta_json.size());
        os.write(ck.meta_json.data(), static_cast<std::streamsize>(ck.meta_json.size()));
        put<uint64_t>(os, ck.tensors.size());
        for (const auto& [name, t] : ck.tensors) {
            put<uint64_t>(os, name.size());
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
            for (int d : t.shape) put<int32_t>(os, d);
            os.write(reinterpret_cast<const char*>(t.ptr()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        }
        if (!os) throw DataError("checkpoint: write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != kVersion) throw DataError("checkpoint: unsupported version");
    Checkpoint ck;
    const uint64_t meta_len = get<uint64_t>(is);
    ck.meta_json.resize(meta_len);
    is.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw DataError("checkpoint: truncated meta");
    const uint64_t count = get<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = get<uint64_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!is) throw DataError("checkpoint: truncated name");
        const uint32_t rank = get<uint32_t>(is);
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = get<int32_t>(is);
            if (shape[d] <= 0) throw DataError("checkpoint: bad dim");
            numel *= shape[d];
        }
        Tensor<float> t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(static_cast<size_t>(numel) * sizeof(float)));
        if (!is) throw DataError("checkpoint: truncated tensor data");
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace chromo
