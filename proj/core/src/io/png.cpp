#include "glamap/io/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace glamap::io {

namespace {

void put32be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back((x >> 24) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back(x & 0xff);
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> out;
    put32be(out, static_cast<uint32_t>(data.size()));
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = crc32(
        crc32(0L, reinterpret_cast<const Bytef*>(type), 4),
        data.empty() ? Z_NULL : reinterpret_cast<const Bytef*>(data.data()),
        static_cast<uInt>(data.size()));
    put32be(out, crc);
    f.write(reinterpret_cast<const char*>(out.data()), out.size());
}

}  // namespace

void write_png_rgb(const std::string& path, const uint8_t* rgb, int width, int height) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open " + path + " for writing");

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put32be(ihdr, static_cast<uint32_t>(width));
    put32be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // colour type: truecolour
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    write_chunk(f, "IHDR", ihdr);

    // Filter byte 0 before each scanline.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb + static_cast<size_t>(y) * width * 3,
                   rgb + static_cast<size_t>(y + 1) * width * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK)
        throw std::runtime_error("png: zlib compression failed");
    comp.resize(comp_len);
    write_chunk(f, "IDAT", comp);
    write_chunk(f, "IEND", {});
    if (!f) throw std::runtime_error("png: short write to " + path);
}

}  // namespace glamap::io
