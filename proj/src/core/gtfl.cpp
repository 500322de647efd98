#include "core/gtfl.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/errors.hpp"

namespace chromo {

void save_flow(const std::string& path, const Flow& f) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("flow write: cannot open " + path);
    os.write("GTFL", 4);
    const int32_t h = f.h, w = f.w;
    os.write(reinterpret_cast<const char*>(&h), 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(f.v.data()),
             static_cast<std::streamsize>(f.v.size() * sizeof(float)));
    if (!os) throw DataError("flow write: write failed " + path);
}

Flow load_flow(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("flow read: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GTFL", 4) != 0)
        throw DataError("flow read: bad magic " + path);
    int32_t h = 0, w = 0;
    is.read(reinterpret_cast<char*>(&h), 4);
    is.read(reinterpret_cast<char*>(&w), 4);
    if (!is || h <= 0 || w <= 0) throw DataError("flow read: bad header " + path);
    Flow f(h, w);
    is.read(reinterpret_cast<char*>(f.v.data()),
            static_cast<std::streamsize>(f.v.size() * sizeof(float)));
    if (!is) throw DataError("flow read: truncated " + path);
    return f;
}

}  // namespace chromo
