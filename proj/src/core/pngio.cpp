#include "core/pngio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "core/errors.hpp"

namespace chromo {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_u32be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + crc_start, static_cast<uInt>(4 + payload.size()));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png_gray8(const std::string& path, const Image& im) {
    if (im.h <= 0 || im.w <= 0) throw DataError("png write: empty image");
    // Raw scanlines, each prefixed by filter byte 0.
    std::vector<uint8_t> raw(static_cast<size_t>(im.h) * (im.w + 1));
    size_t k = 0;
    for (int y = 0; y < im.h; ++y) {
        raw[k++] = 0;
        for (int x = 0; x < im.w; ++x) {
            const float v = std::min(1.f, std::max(0.f, im.at(y, x)));
            raw[k++] = static_cast<uint8_t>(std::lround(v * 255.f));
        }
    }
    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("png write: deflate failed");
    comp.resize(comp_cap);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(im.w));
    put_u32be(ihdr, static_cast<uint32_t>(im.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("png write: cannot open " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw DataError("png write: write failed " + path);
}

Image read_png_gray8(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("png read: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 + 25) throw DataError("png read: truncated " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(buf.data(), sig, 8) != 0) throw DataError("png read: bad signature " + path);

    int w = 0, h = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool done = false;
    while (!done) {
        if (pos + 8 > buf.size()) throw DataError("png read: truncated chunk " + path);
        const uint32_t len = read_u32be(buf.data() + pos);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        if (pos + 12 + len > buf.size()) throw DataError("png read: truncated chunk " + path);
        const uint8_t* payload = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("png read: bad IHDR " + path);
            w = static_cast<int>(read_u32be(payload));
            h = static_cast<int>(read_u32be(payload + 4));
            if (payload[8] != 8 || payload[9] != 0)
                throw DataError("png read: only 8-bit grayscale supported: " + path);
            if (payload[12] != 0) throw DataError("png read: interlace unsupported " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            done = true;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || idat.empty()) throw DataError("png read: missing data " + path);

    std::vector<uint8_t> raw(static_cast<size_t>(h) * (w + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw DataError("png read: inflate failed " + path);

    // Defilter (grayscale 8-bit: 1 byte per pixel).
    Image im(h, w);
    std::vector<uint8_t> prev(static_cast<size_t>(w), 0);
    std::vector<uint8_t> cur(static_cast<size_t>(w), 0);
    for (int y = 0; y < h; ++y) {
        const uint8_t* line = raw.data() + static_cast<size_t>(y) * (w + 1);
        const uint8_t filter = line[0];
        for (int x = 0; x < w; ++x) {
            const int rx = line[1 + x];
            const int a = x > 0 ? cur[static_cast<size_t>(x - 1)] : 0;
            const int b = prev[static_cast<size_t>(x)];
            const int c = x > 0 ? prev[static_cast<size_t>(x - 1)] : 0;
            int v;
            switch (filter) {
                case 0: v = rx; break;
                case 1: v = rx + a; break;
                case 2: v = rx + b; break;
                case 3: v = rx + (a + b) / 2; break;
                case 4: v = rx + paeth(a, b, c); break;
                default: throw DataError("png read: bad filter type " + path);
            }
            cur[static_cast<size_t>(x)] = static_cast<uint8_t>(v & 0xff);
        }
        for (int x = 0; x < w; ++x) im.at(y, x) = static_cast<float>(cur[static_cast<size_t>(x)]) / 255.f;
        std::swap(prev, cur);
    }
    return im;
}

}  // namespace chromo
