#pragma once
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lfseg/core/io.hpp"
#include "lfseg/net/lfunet.hpp"

namespace lfseg {

/// Checkpoint directory: config.json + params.tns (named-tensor container).
/// Reload is bit-exact; names and shapes are verified against the rebuilt
/// architecture.
inline void save_model(const std::filesystem::path& dir, const Model<float>& model) {
    std::filesystem::create_directories(dir);
    {
        auto os = detail::open_out(dir / "config.json");
        os << nlohmann::json(model.config()).dump(2) << "\n";
    }
    std::vector<NamedTensor> tensors;
    for (const auto& p : model.params()) {
        NamedTensor t;
        t.name = p.name;
        t.shape = p.shape;
        t.values.assign(p.value.data(), p.value.data() + p.value.size());
        tensors.push_back(std::move(t));
    }
    write_tensors(dir / "params.tns", tensors);
}

inline Model<float> load_model(const std::filesystem::path& dir) {
    NetworkConfig cfg;
    {
        auto is = detail::open_in(dir / "config.json");
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw CorruptFile("checkpoint config.json is not valid JSON");
        try {
            cfg = j.get<NetworkConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("checkpoint config.json malformed: ") + e.what());
        }
    }
    Model<float> model = Model<float>::build(cfg, Rng(0));
    auto tensors = read_tensors(dir / "params.tns");
    if (tensors.size() != model.params().size())
        throw CorruptFile("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& p = model.params()[i];
        const auto& t = tensors[i];
        if (t.name != p.name || t.shape != p.shape)
            throw CorruptFile("checkpoint: unexpected tensor " + t.name);
        if (t.values.size() != p.value.size())
            throw CorruptFile("checkpoint: payload size mismatch for " + t.name);
        std::copy(t.values.begin(), t.values.end(), p.value.data());
    }
    return model;
}

} // namespace lfseg
