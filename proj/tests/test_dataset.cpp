#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glamap/dataset.hpp"
#include "glamap/io/geotiff.hpp"
#include "glamap/synth.hpp"
#include "helpers.hpp"

using namespace glamap;
using namespace glamap::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("glamap_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_tile_files(const fs::path& dir, const Tile& tile, TileDesc& desc) {
    fs::create_directories(dir);
    io::GeoRef ref;
    ref.pixel_size = 10.0;
    for (const auto& [g, rs] : tile.rasters) {
        std::vector<float> buf(rs.bands.numel());
        for (int64_t i = 0; i < rs.bands.numel(); ++i) buf[i] = static_cast<float>(rs.bands[i]);
        const std::string path = (dir / (g + ".tif")).string();
        io::write_geotiff_f32(path, buf.data(), rs.band_count(), rs.rows(), rs.cols(), ref);
        desc.group_paths[g] = path;
    }
    std::vector<uint8_t> lab(tile.label.raw().begin(), tile.label.raw().end());
    desc.label_path = (dir / "label.tif").string();
    io::write_geotiff_u8(desc.label_path, lab.data(), 1, tile.rows(), tile.cols(), ref);
    desc.id = tile.id;
    desc.region = tile.region;
    desc.lat = tile.lat;
    desc.lon = tile.lon;
}

}  // namespace

TEST_CASE("split_tiles proportions and determinism") {
    auto mk = [](int n) {
        std::vector<TileDesc> t(n);
        for (int i = 0; i < n; ++i) t[i].id = "T" + std::to_string(i);
        return t;
    };
    auto s10 = split_tiles(mk(10), 0);
    CHECK(s10.train.size() == 6);
    CHECK(s10.val.size() == 2);
    CHECK(s10.test.size() == 2);

    auto s100 = split_tiles(mk(100), 0);
    CHECK(s100.train.size() == 60);
    CHECK(s100.val.size() == 20);
    CHECK(s100.test.size() == 20);

    auto s3 = split_tiles(mk(3), 1);
    CHECK(s3.train.size() == 1);
    CHECK(s3.val.size() == 1);
    CHECK(s3.test.size() == 1);

    auto a = split_tiles(mk(17), 42), b = split_tiles(mk(17), 42);
    for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    for (size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].id == b.test[i].id);

    CHECK_THROWS(split_tiles(mk(2), 0));

    // partition property: union = input, pairwise disjoint
    auto s = split_tiles(mk(23), 7);
    std::set<std::string> seen;
    for (const auto* lst : {&s.train, &s.val, &s.test})
        for (const auto& d : *lst) CHECK(seen.insert(d.id).second);
    CHECK(seen.size() == 23);
}

TEST_CASE("synth_scene determinism, degenerate cases and oracle") {
    SynthSpec spec;
    spec.size_px = 48;
    spec.blob_count = 3;

    Tile a = synth_scene(spec, 7);
    Tile b = synth_scene(spec, 7);
    CHECK(a.label == b.label);
    for (const auto& [g, rs] : a.rasters) {
        const auto& o = b.rasters.at(g);
        REQUIRE(rs.bands.numel() == o.bands.numel());
        for (int64_t i = 0; i < rs.bands.numel(); ++i) CHECK(rs.bands[i] == o.bands[i]);
    }

    SynthSpec empty = spec;
    empty.blob_count = 0;
    Tile e = synth_scene(empty, 3);
    for (int r = 0; r < e.rows(); ++r)
        for (int c = 0; c < e.cols(); ++c) CHECK(e.label(r, c) == 0);

    SynthSpec bad = spec;
    bad.size_px = 0;
    CHECK_THROWS(synth_scene(bad, 0));

    // noiseless, debris-free scenes are exactly threshold-separable
    for (uint64_t seed : {1ull, 2ull, 3ull, 11ull}) {
        Tile t = synth_scene(spec, seed);
        CHECK(test_helpers::threshold_oracle(t) == t.label);
    }
}

TEST_CASE("synth_scene with debris breaks the pure band oracle") {
    SynthSpec spec;
    spec.size_px = 48;
    spec.blob_count = 3;
    spec.debris_fraction = 0.3;
    Tile t = synth_scene(spec, 5);
    int mismatches = 0, glacier = 0;
    auto oracle = test_helpers::threshold_oracle(t);
    for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c) {
            glacier += t.label(r, c);
            mismatches += oracle(r, c) != t.label(r, c);
        }
    CHECK(glacier > 0);
    CHECK(mismatches > 0);
    CHECK(mismatches < glacier);  // debris only affects part of the glacier
}

TEST_CASE("extract_patch crops, pads and errors") {
    SynthSpec spec;
    spec.size_px = 48;
    Tile t = synth_scene(spec, 9);

    Rng rng(0);
    Sample s = extract_patch(t, rng, {"optical", "dem"}, 48);
    CHECK(s.features.at("optical").shape() == nn::Shape{6, 48, 48});
    CHECK(s.features.at("dem").shape() == nn::Shape{2, 48, 48});
    CHECK(s.label_onehot.shape() == nn::Shape{2, 48, 48});

    // one-hot sums to 1 at every pixel
    for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c)
            CHECK(s.label_onehot.at3(0, r, c) + s.label_onehot.at3(1, r, c) == 1.0);

    // whole-tile patch has a unique crop: deterministic across rngs
    Rng r2(999);
    Sample s2 = extract_patch(t, r2, {"optical"}, 48);
    for (int64_t i = 0; i < s2.features["optical"].numel(); ++i)
        CHECK(s2.features["optical"][i] == s.features["optical"][i]);

    CHECK_THROWS_WITH_AS(extract_patch(t, rng, {"thermal", "missing"}, 32),
                         "group missing unavailable", std::invalid_argument);

    // reflect-pad: a 48px tile still yields a 64px patch
    Sample sp = extract_patch(t, rng, {"optical"}, 64);
    CHECK(sp.features["optical"].shape() == nn::Shape{6, 64, 64});
    CHECK(sp.label_onehot.dim(1) == 64);
}

TEST_CASE("extract_patch applies one offset across groups and label") {
    // coordinate-channel tile: band value encodes the pixel position
    const int n = 32;
    Tile t;
    t.id = "COORD";
    t.label = MaskGrid(n, n, 0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) t.label(r, c) = (r + c) % 2;
    for (const std::string g : {"thermal", "sar"}) {
        RasterStack rs;
        const int bands = g == "sar" ? 2 : 1;
        rs.bands = nn::Tensor({bands, n, n});
        rs.nodata = MaskGrid(n, n, 0);
        for (int b = 0; b < bands; ++b)
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    rs.bands.at3(b, r, c) = (r * n + c) / 2000.0;  // coordinate channel
        t.rasters[g] = rs;
    }
    Rng rng(3);
    const int patch = 16;
    Sample s = extract_patch(t, rng, {"thermal", "sar"}, patch);
    // recover the offset from the thermal channel, then check sar + label agree
    const double v0 = s.features["thermal"].at3(0, 0, 0) * 2000.0;
    const int r0 = static_cast<int>(std::lround(v0)) / n;
    const int c0 = static_cast<int>(std::lround(v0)) % n;
    for (int r = 0; r < patch; ++r)
        for (int c = 0; c < patch; ++c) {
            // sigma0 band goes through the dB mapping; invert it in the oracle
            const double raw = ((r0 + r) * n + (c0 + c)) / 2000.0;
            const double expect = (raw + 30.0) / 35.0;
            CHECK(s.features["sar"].at3(0, r, c) == doctest::Approx(expect));
            CHECK(s.label_onehot.at3(1, r, c) == ((r0 + r + c0 + c) % 2 ? 1.0 : 0.0));
        }
}

TEST_CASE("normalization ranges") {
    SynthSpec spec;
    spec.size_px = 40;
    spec.noise_level = 0.2;  // push optical outside [0,1] so clipping engages
    Tile t = synth_scene(spec, 21);
    auto opt = normalized_group(t.rasters.at("optical"), "optical");
    CHECK(opt.min() >= 0.0);
    CHECK(opt.max() <= 1.0);
    auto dem = normalized_group(t.rasters.at("dem"), "dem");
    // standardized elevation: near-zero mean
    double mean = 0;
    const int64_t hw = static_cast<int64_t>(t.rows()) * t.cols();
    for (int64_t i = 0; i < hw; ++i) mean += dem[i];
    CHECK(std::abs(mean / hw) < 1e-9);
    // slope band in [0,1)
    for (int64_t i = hw; i < 2 * hw; ++i) {
        CHECK(dem[i] >= 0.0);
        CHECK(dem[i] < 1.0);
    }
    auto sar = normalized_group(t.rasters.at("sar"), "sar");
    CHECK(sar.min() >= 0.0);
    CHECK(sar.max() <= 1.0);
}

TEST_CASE("manifest round trip, lazy load and validation") {
    fs::path dir = temp_dir("manifest");
    SynthSpec spec;
    spec.size_px = 32;
    std::vector<TileDesc> descs;
    for (int i = 0; i < 3; ++i) {
        spec.id = "SYN-0-" + std::to_string(i);
        Tile t = synth_scene(spec, 100 + i);
        t.split = i == 0 ? Split::train : (i == 1 ? Split::val : Split::test);
        TileDesc d;
        d.split = t.split;
        write_tile_files(dir / t.id, t, d);
        descs.push_back(d);
    }
    const std::string mpath = (dir / "manifest.json").string();
    save_manifest(mpath, descs, 10.0, "EPSG:32633");

    auto loaded = load_manifest(mpath);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].split == Split::train);
    CHECK(loaded[1].split == Split::val);
    CHECK(loaded[2].split == Split::test);

    Tile t0 = load_tile(loaded[0]);
    CHECK(t0.rows() == 32);
    CHECK(t0.rasters.count("optical") == 1);

    // empty manifest -> empty list
    const std::string epath = (dir / "empty.json").string();
    std::ofstream(epath) << "{\"tiles\": []}\n";
    CHECK(load_manifest(epath).empty());

    // missing file -> I/O error
    CHECK_THROWS(load_manifest((dir / "nope.json").string()));

    // shape mismatch raster -> validation error naming the tile
    {
        auto bad = descs;
        io::GeoRef ref;
        std::vector<float> small(2 * 31 * 32, 0.f);
        const std::string bad_dem = (dir / "bad_dem.tif").string();
        io::write_geotiff_f32(bad_dem, small.data(), 2, 31, 32, ref);
        bad[1].group_paths["dem"] = bad_dem;
        save_manifest(mpath, bad, 10.0, "EPSG:32633");
        CHECK_THROWS_WITH_AS(load_manifest(mpath), "SYN-0-1: shape mismatch",
                             std::runtime_error);
    }
}

TEST_CASE("region codes and data tracks") {
    CHECK(region_names().size() == 12);
    CHECK(region_by_name("UNKNOWN").index == 11);
    CHECK(region_by_index(0).name == "ALP");
    CHECK_THROWS(region_by_name("XXX"));
    CHECK_THROWS(region_by_index(12));

    auto t1 = data_track("OPT_DEM");
    CHECK(t1.groups == std::vector<std::string>{"optical", "dem"});
    auto t3 = data_track("OPT_DEM_INSAR");
    CHECK(t3.groups.back() == "sar");
    CHECK_THROWS(data_track("BAD"));
}

TEST_CASE("patch grid covers the scene") {
    auto offs = patch_grid_offsets(100, 70, 32, 32);
    bool covered[100][70] = {};
    for (auto [r, c] : offs)
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) covered[r + i][c + j] = true;
    for (int r = 0; r < 100; ++r)
        for (int c = 0; c < 70; ++c) CHECK(covered[r][c]);
}
