#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "glamap/model.hpp"

// Checkpoint archive: 8-byte magic, u32 format version, u64 JSON length, the
// JSON block (config + tensor index), then each tensor's raw little-endian
// float64 payload in index order.

namespace glamap::model {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'L', 'M', 'A', 'P', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
    json j;
    j["patch_size_px"] = c.patch_size_px;
    j["token_patch"] = c.token_patch;
    j["embed_dim"] = c.embed_dim;
    j["depth"] = c.depth;
    j["heads"] = c.heads;
    j["base_channels"] = c.base_channels;
    j["unet_depth"] = c.unet_depth;
    j["dropout_rate"] = c.dropout_rate;
    j["num_classes"] = c.num_classes;
    j["groups"] = c.groups;
    j["location_mode"] = location_mode_name(c.location_mode);
    j["unet_concat_fused"] = c.unet_concat_fused;
    j["loc_hidden"] = c.loc_hidden;
    j["init_seed"] = c.init_seed;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.patch_size_px = j.at("patch_size_px").get<int>();
    c.token_patch = j.at("token_patch").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.unet_depth = j.at("unet_depth").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.num_classes = j.at("num_classes").get<int>();
    c.groups = j.at("groups").get<std::vector<std::string>>();
    c.location_mode = location_mode_from_name(j.at("location_mode").get<std::string>());
    c.unet_concat_fused = j.at("unet_concat_fused").get<bool>();
    c.loc_hidden = j.at("loc_hidden").get<int>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_state(const ModelState& state, const std::string& path) {
    if (path.empty()) throw std::runtime_error("save_state: empty path");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_state: cannot open " + path + " for writing");

    json index;
    index["config"] = config_to_json(state.config);
    index["tensors"] = json::array();
    for (const auto& [name, var] : state.params()) {
        json t;
        t["name"] = name;
        t["shape"] = var.val().shape();
        t["dtype"] = "f64";
        index["tensors"].push_back(t);
    }
    const std::string js = index.dump();

    f.write(kMagic, 8);
    const uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t jlen = js.size();
    f.write(reinterpret_cast<const char*>(&jlen), 8);
    f.write(js.data(), static_cast<std::streamsize>(js.size()));
    for (const auto& [name, var] : state.params()) {
        const nn::Tensor& t = var.val();
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("save_state: short write to " + path);
}

ModelState load_state(const std::string& path) {
    if (path.empty()) throw std::runtime_error("load_state: empty path");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_state: cannot open " + path);

    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_state: " + path + " is not a model checkpoint");
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kVersion)
        throw std::runtime_error("load_state: unsupported checkpoint version " +
                                 std::to_string(ver));
    uint64_t jlen = 0;
    f.read(reinterpret_cast<char*>(&jlen), 8);
    if (!f || jlen == 0 || jlen > (1ull << 32))
        throw std::runtime_error("load_state: corrupt header in " + path);
    std::string js(jlen, '\0');
    f.read(js.data(), static_cast<std::streamsize>(jlen));
    if (!f) throw std::runtime_error("load_state: truncated checkpoint " + path);

    json index;
    try {
        index = json::parse(js);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_state: corrupt index in " + path + ": " + e.what());
    }

    ModelState st = ModelState::init(config_from_json(index.at("config")));

    std::vector<std::string> seen;
    for (const auto& jt : index.at("tensors")) {
        const std::string name = jt.at("name").get<std::string>();
        const auto shape = jt.at("shape").get<nn::Shape>();
        if (!st.has_param(name))
            throw std::runtime_error("load_state: checkpoint has unknown parameter '" + name +
                                     "'");
        nn::Tensor& dst = st.param(name).mutable_val();
        if (dst.shape() != shape)
            throw std::runtime_error("load_state: shape mismatch for parameter '" + name + "'");
        f.read(reinterpret_cast<char*>(dst.data()),
               static_cast<std::streamsize>(dst.numel() * sizeof(double)));
        if (!f) throw std::runtime_error("load_state: truncated tensor data in " + path);
        seen.push_back(name);
    }
    if (seen.size() != st.params().size()) {
        std::string missing;
        for (const auto& [name, _] : st.params())
            if (std::find(seen.begin(), seen.end(), name) == seen.end())
                missing += (missing.empty() ? "" : ", ") + name;
        throw std::runtime_error("load_state: checkpoint is missing parameters: " + missing);
    }
    return st;
}

}  // namespace glamap::model
