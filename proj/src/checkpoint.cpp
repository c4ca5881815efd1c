#include "lws/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lws {

static constexpr const char* k_format = "lws-forge-checkpoint-v1";

void save_checkpoint(const std::string& dir, const weights<float>& w, const model_config& cfg,
                     long long step) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json index = nlohmann::json::array();
    long long offset = 0;
    for_each_tensor(w, [&](const std::string& name, const tensor<float>& t, bool) {
        index.push_back({{"name", name},
                         {"shape", t.shape},
                         {"offset_bytes", offset},
                         {"numel", t.numel()}});
        offset += t.numel() * (long long)sizeof(float);
    });

    const std::string bin_path = (fs::path(dir) / "weights.bin").string();
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + bin_path);
    for_each_tensor(w, [&](const std::string&, const tensor<float>& t, bool) {
        bin.write((const char*)t.data.data(), (std::streamsize)(t.data.size() * sizeof(float)));
    });
    bin.close();
    if (!bin) throw std::runtime_error("short write to " + bin_path);

    nlohmann::json manifest{{"format", k_format},
                            {"step", step},
                            {"config", cfg},
                            {"tensors", index},
                            {"total_bytes", offset}};
    const std::string man_path = (fs::path(dir) / "manifest.json").string();
    std::ofstream man(man_path);
    if (!man) throw std::runtime_error("cannot write " + man_path);
    man << manifest.dump(2) << "\n";
}

checkpoint_data load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string man_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream man(man_path);
    if (!man) throw std::runtime_error("cannot open " + man_path);
    nlohmann::json manifest;
    man >> manifest;

    if (manifest.value("format", "") != k_format)
        throw std::runtime_error("unknown checkpoint format in " + man_path);

    checkpoint_data out;
    out.step = manifest.at("step").get<long long>();
    out.config = manifest.at("config").get<model_config>();
    validate(out.config);
    out.model = allocate_weights<float>(out.config);

    const std::string bin_path = (fs::path(dir) / "weights.bin").string();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + bin_path);

    const nlohmann::json& index = manifest.at("tensors");
    size_t entry = 0;
    for_each_tensor(out.model, [&](const std::string& name, tensor<float>& t, bool) {
        if (entry >= index.size())
            throw std::runtime_error("checkpoint tensor index is shorter than the model");
        const nlohmann::json& e = index[entry++];
        if (e.at("name").get<std::string>() != name ||
            e.at("numel").get<long long>() != t.numel())
            throw std::runtime_error("checkpoint tensor mismatch at " + name);
        bin.seekg(e.at("offset_bytes").get<long long>());
        bin.read((char*)t.data.data(), (std::streamsize)(t.data.size() * sizeof(float)));
        if (!bin) throw std::runtime_error("short read for tensor " + name);
    });
    if (entry != index.size())
        throw std::runtime_error("checkpoint tensor index is longer than the model");
    return out;
}

} // namespace lws
