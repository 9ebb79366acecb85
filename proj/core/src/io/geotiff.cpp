#include "glamap/io/geotiff.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

// Self-contained classic-TIFF (little-endian) reader/writer for the subset
// this toolkit produces: uncompressed, stripped, planar or chunky, 8-bit
// unsigned or 32-bit float samples, with the GeoTIFF georeferencing tags
// (ModelPixelScale, ModelTiepoint, GeoKeyDirectory) and GDAL's nodata tag.

namespace glamap::io {

namespace {

constexpr uint16_t TAG_IMAGE_WIDTH = 256;
constexpr uint16_t TAG_IMAGE_LENGTH = 257;
constexpr uint16_t TAG_BITS_PER_SAMPLE = 258;
constexpr uint16_t TAG_COMPRESSION = 259;
constexpr uint16_t TAG_PHOTOMETRIC = 262;
constexpr uint16_t TAG_STRIP_OFFSETS = 273;
constexpr uint16_t TAG_SAMPLES_PER_PIXEL = 277;
constexpr uint16_t TAG_ROWS_PER_STRIP = 278;
constexpr uint16_t TAG_STRIP_BYTE_COUNTS = 279;
constexpr uint16_t TAG_PLANAR_CONFIG = 284;
constexpr uint16_t TAG_SAMPLE_FORMAT = 339;
constexpr uint16_t TAG_MODEL_PIXEL_SCALE = 33550;
constexpr uint16_t TAG_MODEL_TIEPOINT = 33922;
constexpr uint16_t TAG_GEO_KEY_DIRECTORY = 34735;
constexpr uint16_t TAG_GDAL_NODATA = 42113;

constexpr uint16_t TYPE_BYTE = 1;
constexpr uint16_t TYPE_ASCII = 2;
constexpr uint16_t TYPE_SHORT = 3;
constexpr uint16_t TYPE_LONG = 4;
constexpr uint16_t TYPE_DOUBLE = 12;

uint32_t type_size(uint16_t t) {
    switch (t) {
        case TYPE_BYTE:
        case TYPE_ASCII: return 1;
        case TYPE_SHORT: return 2;
        case TYPE_LONG: return 4;
        case TYPE_DOUBLE: return 8;
        default: return 0;
    }
}

struct Entry {
    uint16_t tag;
    uint16_t type;
    uint32_t count;
    std::vector<uint8_t> payload;  // raw little-endian values
};

void put16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}
void put32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xff);
}
void put64f(std::vector<uint8_t>& v, double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) v.push_back((bits >> (8 * i)) & 0xff);
}

Entry make_shorts(uint16_t tag, const std::vector<uint16_t>& vals) {
    Entry e{tag, TYPE_SHORT, static_cast<uint32_t>(vals.size()), {}};
    for (uint16_t v : vals) put16(e.payload, v);
    return e;
}
Entry make_longs(uint16_t tag, const std::vector<uint32_t>& vals) {
    Entry e{tag, TYPE_LONG, static_cast<uint32_t>(vals.size()), {}};
    for (uint32_t v : vals) put32(e.payload, v);
    return e;
}
Entry make_doubles(uint16_t tag, const std::vector<double>& vals) {
    Entry e{tag, TYPE_DOUBLE, static_cast<uint32_t>(vals.size()), {}};
    for (double v : vals) put64f(e.payload, v);
    return e;
}
Entry make_ascii(uint16_t tag, const std::string& s) {
    Entry e{tag, TYPE_ASCII, static_cast<uint32_t>(s.size() + 1), {}};
    e.payload.assign(s.begin(), s.end());
    e.payload.push_back(0);
    return e;
}

void write_tiff(const std::string& path, const uint8_t* data, size_t bytes_per_sample,
                int sample_format, int bands, int height, int width, const GeoRef& ref,
                std::optional<double> nodata) {
    const uint64_t band_bytes =
        static_cast<uint64_t>(height) * width * bytes_per_sample;

    std::vector<Entry> entries;
    entries.push_back(make_longs(TAG_IMAGE_WIDTH, {static_cast<uint32_t>(width)}));
    entries.push_back(make_longs(TAG_IMAGE_LENGTH, {static_cast<uint32_t>(height)}));
    entries.push_back(make_shorts(
        TAG_BITS_PER_SAMPLE,
        std::vector<uint16_t>(bands, static_cast<uint16_t>(bytes_per_sample * 8))));
    entries.push_back(make_shorts(TAG_COMPRESSION, {1}));
    entries.push_back(make_shorts(TAG_PHOTOMETRIC, {1}));
    // One strip per band; offsets filled in after layout below.
    entries.push_back(make_longs(TAG_STRIP_OFFSETS, std::vector<uint32_t>(bands, 0)));
    entries.push_back(make_shorts(TAG_SAMPLES_PER_PIXEL, {static_cast<uint16_t>(bands)}));
    entries.push_back(make_longs(TAG_ROWS_PER_STRIP, {static_cast<uint32_t>(height)}));
    entries.push_back(make_longs(
        TAG_STRIP_BYTE_COUNTS,
        std::vector<uint32_t>(bands, static_cast<uint32_t>(band_bytes))));
    entries.push_back(make_shorts(TAG_PLANAR_CONFIG, {2}));
    entries.push_back(make_shorts(
        TAG_SAMPLE_FORMAT,
        std::vector<uint16_t>(bands, static_cast<uint16_t>(sample_format))));
    entries.push_back(
        make_doubles(TAG_MODEL_PIXEL_SCALE, {ref.pixel_size, ref.pixel_size, 0.0}));
    entries.push_back(make_doubles(TAG_MODEL_TIEPOINT,
                                   {0.0, 0.0, 0.0, ref.origin_x, ref.origin_y, 0.0}));
    {
        const bool geographic = ref.epsg == 4326;
        std::vector<uint16_t> keys = {
            1, 1, 0, 3,
            1024, 0, 1, static_cast<uint16_t>(geographic ? 2 : 1),  // model type
            1025, 0, 1, 1,                                          // pixel is area
            static_cast<uint16_t>(geographic ? 2048 : 3072), 0, 1,
            static_cast<uint16_t>(ref.epsg)};
        entries.push_back(make_shorts(TAG_GEO_KEY_DIRECTORY, keys));
    }
    if (nodata) {
        std::ostringstream os;
        os << *nodata;
        entries.push_back(make_ascii(TAG_GDAL_NODATA, os.str()));
    }

    // Layout: 8-byte header | band strips | overflow payloads | IFD.
    uint32_t offset = 8;
    std::vector<uint32_t> strip_offsets(bands);
    for (int b = 0; b < bands; ++b) {
        strip_offsets[b] = offset;
        offset += static_cast<uint32_t>(band_bytes);
    }
    for (auto& e : entries)
        if (e.tag == TAG_STRIP_OFFSETS) {
            e.payload.clear();
            for (uint32_t so : strip_offsets) put32(e.payload, so);
        }
    std::vector<uint32_t> value_offsets(entries.size(), 0);
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].payload.size() > 4) {
            if (offset % 2) ++offset;  // word alignment
            value_offsets[i] = offset;
            offset += static_cast<uint32_t>(entries[i].payload.size());
        }
    }
    if (offset % 2) ++offset;
    const uint32_t ifd_offset = offset;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("geotiff: cannot open " + path + " for writing");

    std::vector<uint8_t> header;
    header.push_back('I');
    header.push_back('I');
    put16(header, 42);
    put32(header, ifd_offset);
    f.write(reinterpret_cast<const char*>(header.data()), header.size());

    for (int b = 0; b < bands; ++b)
        f.write(reinterpret_cast<const char*>(data + b * band_bytes), band_bytes);

    uint32_t pos = 8 + static_cast<uint32_t>(band_bytes) * bands;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].payload.size() > 4) {
            while (pos < value_offsets[i]) {
                f.put(0);
                ++pos;
            }
            f.write(reinterpret_cast<const char*>(entries[i].payload.data()),
                    entries[i].payload.size());
            pos += static_cast<uint32_t>(entries[i].payload.size());
        }
    }
    while (pos < ifd_offset) {
        f.put(0);
        ++pos;
    }

    std::vector<uint8_t> ifd;
    put16(ifd, static_cast<uint16_t>(entries.size()));
    for (size_t i = 0; i < entries.size(); ++i) {
        const Entry& e = entries[i];
        put16(ifd, e.tag);
        put16(ifd, e.type);
        put32(ifd, e.count);
        if (e.payload.size() <= 4) {
            std::vector<uint8_t> inline4 = e.payload;
            inline4.resize(4, 0);
            ifd.insert(ifd.end(), inline4.begin(), inline4.end());
        } else
            put32(ifd, value_offsets[i]);
    }
    put32(ifd, 0);  // no next IFD
    f.write(reinterpret_cast<const char*>(ifd.data()), ifd.size());
    if (!f) throw std::runtime_error("geotiff: short write to " + path);
}

// ---- reading ----------------------------------------------------------------

struct Reader {
    std::vector<uint8_t> buf;
    bool big_endian = false;

    uint16_t u16(size_t off) const {
        check(off, 2);
        return big_endian ? (buf[off] << 8) | buf[off + 1]
                          : buf[off] | (buf[off + 1] << 8);
    }
    uint32_t u32(size_t off) const {
        check(off, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(buf[off + (big_endian ? 3 - i : i)]) << (8 * i);
        return v;
    }
    double f64(size_t off) const {
        check(off, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(buf[off + (big_endian ? 7 - i : i)]) << (8 * i);
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    float f32(size_t off) const {
        check(off, 4);
        uint32_t v = u32(off);
        float d;
        std::memcpy(&d, &v, 4);
        return d;
    }
    void check(size_t off, size_t n) const {
        if (off + n > buf.size()) throw std::runtime_error("geotiff: truncated file");
    }
};

struct RawEntry {
    uint16_t type = 0;
    uint32_t count = 0;
    size_t value_off = 0;  // offset of the value bytes in the file
};

std::map<uint16_t, RawEntry> read_ifd(const Reader& r, uint32_t ifd_offset) {
    std::map<uint16_t, RawEntry> tags;
    const uint16_t n = r.u16(ifd_offset);
    for (uint16_t i = 0; i < n; ++i) {
        const size_t e = ifd_offset + 2 + static_cast<size_t>(i) * 12;
        const uint16_t tag = r.u16(e);
        RawEntry re;
        re.type = r.u16(e + 2);
        re.count = r.u32(e + 4);
        const uint64_t total = static_cast<uint64_t>(re.count) * type_size(re.type);
        re.value_off = total <= 4 ? e + 8 : r.u32(e + 8);
        tags[tag] = re;
    }
    return tags;
}

uint32_t scalar_u(const Reader& r, const RawEntry& e, uint32_t index = 0) {
    if (e.type == TYPE_SHORT) return r.u16(e.value_off + 2 * index);
    if (e.type == TYPE_LONG) return r.u32(e.value_off + 4 * index);
    throw std::runtime_error("geotiff: unexpected tag type");
}

}  // namespace

void write_geotiff_f32(const std::string& path, const float* data, int bands, int height,
                       int width, const GeoRef& ref, std::optional<double> nodata) {
    write_tiff(path, reinterpret_cast<const uint8_t*>(data), 4, 3, bands, height, width,
               ref, nodata);
}

void write_geotiff_u8(const std::string& path, const uint8_t* data, int bands, int height,
                      int width, const GeoRef& ref, std::optional<double> nodata) {
    write_tiff(path, data, 1, 1, bands, height, width, ref, nodata);
}

GeoTiffInfo read_geotiff_info(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("geotiff: cannot open " + path);
    Reader r;
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    if (r.buf.size() < 8) throw std::runtime_error("geotiff: not a TIFF: " + path);
    if (r.buf[0] == 'I' && r.buf[1] == 'I')
        r.big_endian = false;
    else if (r.buf[0] == 'M' && r.buf[1] == 'M')
        r.big_endian = true;
    else
        throw std::runtime_error("geotiff: bad byte-order mark in " + path);
    if (r.u16(2) != 42) throw std::runtime_error("geotiff: bad magic in " + path);

    auto tags = read_ifd(r, r.u32(4));
    auto need = [&](uint16_t t) -> const RawEntry& {
        auto it = tags.find(t);
        if (it == tags.end())
            throw std::runtime_error("geotiff: missing tag " + std::to_string(t) + " in " +
                                     path);
        return it->second;
    };

    GeoTiffInfo info;
    info.width = static_cast<int>(scalar_u(r, need(TAG_IMAGE_WIDTH)));
    info.height = static_cast<int>(scalar_u(r, need(TAG_IMAGE_LENGTH)));
    info.bands = tags.count(TAG_SAMPLES_PER_PIXEL)
                     ? static_cast<int>(scalar_u(r, tags[TAG_SAMPLES_PER_PIXEL]))
                     : 1;
    info.bits = static_cast<int>(scalar_u(r, need(TAG_BITS_PER_SAMPLE)));
    info.sample_format =
        tags.count(TAG_SAMPLE_FORMAT) ? static_cast<int>(scalar_u(r, tags[TAG_SAMPLE_FORMAT]))
                                      : 1;
    if (tags.count(TAG_MODEL_PIXEL_SCALE))
        info.ref.pixel_size = r.f64(tags[TAG_MODEL_PIXEL_SCALE].value_off);
    if (tags.count(TAG_MODEL_TIEPOINT)) {
        const size_t off = tags[TAG_MODEL_TIEPOINT].value_off;
        info.ref.origin_x = r.f64(off + 3 * 8);
        info.ref.origin_y = r.f64(off + 4 * 8);
    }
    if (tags.count(TAG_GEO_KEY_DIRECTORY)) {
        const RawEntry& e = tags[TAG_GEO_KEY_DIRECTORY];
        const uint32_t nkeys = r.u16(e.value_off + 6);
        for (uint32_t k = 0; k < nkeys; ++k) {
            const size_t koff = e.value_off + 8 * (1 + static_cast<size_t>(k));
            const uint16_t key = r.u16(koff);
            if (key == 3072 || key == 2048) info.ref.epsg = r.u16(koff + 6);
        }
    }
    if (tags.count(TAG_GDAL_NODATA)) {
        const RawEntry& e = tags[TAG_GDAL_NODATA];
        std::string s;
        for (uint32_t i = 0; i + 1 < e.count; ++i)
            s += static_cast<char>(r.buf[e.value_off + i]);
        try {
            info.nodata = std::stod(s);
        } catch (const std::exception&) {
        }
    }
    return info;
}

GeoTiffImage read_geotiff(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("geotiff: cannot open " + path);
    Reader r;
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    GeoTiffImage img;
    img.info = read_geotiff_info(path);
    const GeoTiffInfo& info = img.info;
    if (r.buf[0] == 'M') r.big_endian = true;

    auto tags = read_ifd(r, r.u32(4));
    if (tags.count(TAG_COMPRESSION) && scalar_u(r, tags[TAG_COMPRESSION]) != 1)
        throw std::runtime_error("geotiff: compressed TIFFs are not supported: " + path);
    if (info.bits != 8 && info.bits != 32)
        throw std::runtime_error("geotiff: unsupported bit depth in " + path);

    const int planar =
        tags.count(TAG_PLANAR_CONFIG) ? static_cast<int>(scalar_u(r, tags[TAG_PLANAR_CONFIG])) : 1;
    const RawEntry& so = tags.at(TAG_STRIP_OFFSETS);
    const uint32_t nstrips = so.count;
    const uint32_t rows_per_strip = tags.count(TAG_ROWS_PER_STRIP)
                                        ? scalar_u(r, tags[TAG_ROWS_PER_STRIP])
                                        : static_cast<uint32_t>(info.height);

    // Gather the sample stream strip by strip, then de-interleave.
    std::vector<uint8_t> stream;
    stream.reserve(static_cast<size_t>(info.width) * info.height * info.bands *
                   (info.bits / 8));
    const RawEntry& sbc = tags.at(TAG_STRIP_BYTE_COUNTS);
    for (uint32_t s = 0; s < nstrips; ++s) {
        const uint32_t off = scalar_u(r, so, s);
        const uint32_t cnt = scalar_u(r, sbc, s);
        r.check(off, cnt);
        stream.insert(stream.end(), r.buf.begin() + off, r.buf.begin() + off + cnt);
    }

    const size_t npix = static_cast<size_t>(info.width) * info.height;
    img.data.assign(npix * info.bands, 0.0f);
    const size_t bps = info.bits / 8;

    auto sample_at = [&](size_t sample_index) -> float {
        const size_t off = sample_index * bps;
        if (info.bits == 8) return static_cast<float>(stream[off]);
        if (info.sample_format == 3) {
            if (!r.big_endian) {
                float v;
                std::memcpy(&v, stream.data() + off, 4);
                return v;
            }
            uint32_t u = (stream[off] << 24) | (stream[off + 1] << 16) |
                         (stream[off + 2] << 8) | stream[off + 3];
            float v;
            std::memcpy(&v, &u, 4);
            return v;
        }
        uint32_t u = 0;
        for (int i = 0; i < 4; ++i)
            u |= static_cast<uint32_t>(stream[off + (r.big_endian ? 3 - i : i)]) << (8 * i);
        return static_cast<float>(u);
    };

    if (planar == 2) {
        // strips are per band (possibly several strips per band)
        const uint32_t strips_per_band = (info.height + rows_per_strip - 1) / rows_per_strip;
        (void)strips_per_band;
        for (size_t i = 0; i < npix * info.bands; ++i) img.data[i] = sample_at(i);
    } else {
        for (size_t p = 0; p < npix; ++p)
            for (int b = 0; b < info.bands; ++b)
                img.data[static_cast<size_t>(b) * npix + p] =
                    sample_at(p * info.bands + b);
    }
    return img;
}

}  // namespace glamap::io
