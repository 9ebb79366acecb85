#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace glamap::io {

/// Georeferencing carried by every raster the toolkit writes.
struct GeoRef {
    double origin_x = 0.0;   // projected x of the top-left corner
    double origin_y = 0.0;   // projected y of the top-left corner
    double pixel_size = 10.0;
    int epsg = 32633;        // EPSG code; 4326 is treated as geographic
};

struct GeoTiffInfo {
    int width = 0;
    int height = 0;
    int bands = 0;
    int bits = 0;           // bits per sample
    int sample_format = 1;  // 1=unsigned int, 2=signed int, 3=float
    GeoRef ref;
    std::optional<double> nodata;
};

/// Band-major pixel payload: data[band*H*W + row*W + col], as float.
struct GeoTiffImage {
    GeoTiffInfo info;
    std::vector<float> data;
    float at(int band, int row, int col) const {
        return data[(static_cast<size_t>(band) * info.height + row) * info.width + col];
    }
};

/// Header-only read (dimensions and tags; no pixel payload).
GeoTiffInfo read_geotiff_info(const std::string& path);
GeoTiffImage read_geotiff(const std::string& path);

/// Writes an uncompressed planar GeoTIFF, float32 samples.
void write_geotiff_f32(const std::string& path, const float* data, int bands, int height,
                       int width, const GeoRef& ref,
                       std::optional<double> nodata = std::nullopt);
/// Same, uint8 samples (masks and labels).
void write_geotiff_u8(const std::string& path, const uint8_t* data, int bands, int height,
                      int width, const GeoRef& ref,
                      std::optional<double> nodata = std::nullopt);

}  // namespace glamap::io
