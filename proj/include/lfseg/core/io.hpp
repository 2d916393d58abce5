#pragma once
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfseg/core/error.hpp"
#include "lfseg/core/tensor.hpp"
#include "lfseg/data/types.hpp"

namespace lfseg {

static_assert(std::endian::native == std::endian::little,
              "on-disk containers are little-endian; big-endian hosts are unsupported");

namespace detail {

inline void write_exact(std::ofstream& os, const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw IoError("short write");
}

inline void read_exact(std::ifstream& is, void* data, std::size_t n, const char* what) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw CorruptFile(std::string("unexpected end of file while reading ") + what);
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    return is;
}

/// magic (8 bytes) + u32le header length + UTF-8 JSON header.
inline void write_header(std::ofstream& os, const char magic[8], const nlohmann::json& hdr) {
    write_exact(os, magic, 8);
    std::string text = hdr.dump();
    std::uint32_t len = static_cast<std::uint32_t>(text.size());
    write_exact(os, &len, 4);
    write_exact(os, text.data(), text.size());
}

inline nlohmann::json read_header(std::ifstream& is, const char magic[8], const char* format) {
    char got[8];
    read_exact(is, got, 8, "magic");
    if (std::memcmp(got, magic, 8) != 0)
        throw FormatError(std::string("bad magic for ") + format + " container");
    std::uint32_t len = 0;
    read_exact(is, &len, 4, "header length");
    std::string text(len, '\0');
    read_exact(is, text.data(), len, "header");
    nlohmann::json hdr = nlohmann::json::parse(text, nullptr, false);
    if (hdr.is_discarded()) throw CorruptFile(std::string(format) + ": header is not valid JSON");
    return hdr;
}

} // namespace detail

// ---------------------------------------------------------------------------
// .octv volume container
// ---------------------------------------------------------------------------

inline constexpr char kOctvMagic[9] = "OCTVOL01";

inline void write_volume(const std::filesystem::path& path, const OctVolume& vol) {
    nlohmann::json hdr{{"dims", {vol.num_bscans, vol.height, vol.width}},
                       {"dtype", "f32le"},
                       {"spacing_um", {vol.spacing_um[0], vol.spacing_um[1], vol.spacing_um[2]}}};
    auto os = detail::open_out(path);
    detail::write_header(os, kOctvMagic, hdr);
    detail::write_exact(os, vol.voxels.data(), vol.voxels.size() * sizeof(float));
}

inline OctVolume read_volume(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    nlohmann::json hdr = detail::read_header(is, kOctvMagic, ".octv");
    OctVolume vol;
    try {
        auto dims = hdr.at("dims");
        vol.num_bscans = dims.at(0).get<int>();
        vol.height = dims.at(1).get<int>();
        vol.width = dims.at(2).get<int>();
        if (hdr.at("dtype").get<std::string>() != "f32le")
            throw CorruptFile(".octv: unsupported dtype");
        auto sp = hdr.at("spacing_um");
        vol.spacing_um = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string(".octv: malformed header: ") + e.what());
    }
    if (vol.num_bscans < 0 || vol.height <= 0 || vol.width <= 0)
        throw CorruptFile(".octv: non-positive dims");
    std::size_t count = static_cast<std::size_t>(vol.num_bscans) * vol.height * vol.width;
    vol.voxels.resize(count);
    detail::read_exact(is, vol.voxels.data(), count * sizeof(float), "voxel payload");
    char extra;
    if (is.read(&extra, 1); is.gcount() != 0)
        throw CorruptFile(".octv: trailing bytes after voxel payload");
    return vol;
}

// ---------------------------------------------------------------------------
// Named-tensor container (model checkpoints), same framing as .octv
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[9] = "OCTTNS01";

struct NamedTensor {
    std::string name;
    std::vector<int> shape; // logical dims; payload is the flat f32le buffer
    std::vector<float> values;
};

inline void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : tensors) {
        std::size_t n = 1;
        for (int d : t.shape) n *= static_cast<std::size_t>(d);
        if (n != t.values.size()) throw ShapeError("write_tensors: shape/payload mismatch for " + t.name);
        list.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    auto os = detail::open_out(path);
    detail::write_header(os, kTensorMagic, {{"dtype", "f32le"}, {"tensors", list}});
    for (const auto& t : tensors)
        detail::write_exact(os, t.values.data(), t.values.size() * sizeof(float));
}

inline std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    nlohmann::json hdr = detail::read_header(is, kTensorMagic, "tensor");
    std::vector<NamedTensor> tensors;
    try {
        if (hdr.at("dtype").get<std::string>() != "f32le")
            throw CorruptFile("tensor container: unsupported dtype");
        for (const auto& e : hdr.at("tensors")) {
            NamedTensor t;
            t.name = e.at("name").get<std::string>();
            t.shape = e.at("shape").get<std::vector<int>>();
            tensors.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("tensor container: malformed header: ") + e.what());
    }
    for (auto& t : tensors) {
        std::size_t n = 1;
        for (int d : t.shape) {
            if (d < 0) throw CorruptFile("tensor container: negative dim for " + t.name);
            n *= static_cast<std::size_t>(d);
        }
        t.values.resize(n);
        detail::read_exact(is, t.values.data(), n * sizeof(float), t.name.c_str());
    }
    return tensors;
}

// ---------------------------------------------------------------------------
// Corpus manifest
// ---------------------------------------------------------------------------

/// One volume with its per-B-scan label maps; paths are relative to the
/// manifest file. `surfaces` (ground-truth surface JSON) is optional and
/// present for generated phantoms.
struct ManifestItem {
    std::string id;
    std::string volume;
    std::vector<std::string> labels;
    std::string surfaces;
};

struct Manifest {
    std::vector<ManifestItem> items;
    std::filesystem::path root; // directory the manifest was loaded from

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }

    static Manifest load(const std::filesystem::path& path) {
        auto is = detail::open_in(path);
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw CorruptFile("manifest: not valid JSON: " + path.string());
        Manifest m;
        m.root = path.parent_path();
        try {
            for (const auto& e : j.at("items")) {
                ManifestItem item;
                item.id = e.at("id").get<std::string>();
                item.volume = e.at("volume").get<std::string>();
                item.labels = e.at("labels").get<std::vector<std::string>>();
                if (e.contains("surfaces")) item.surfaces = e.at("surfaces").get<std::string>();
                m.items.push_back(std::move(item));
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(std::string("manifest: malformed: ") + e.what());
        }
        return m;
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json items_json = nlohmann::json::array();
        for (const auto& item : items) {
            nlohmann::json e{{"id", item.id}, {"volume", item.volume}, {"labels", item.labels}};
            if (!item.surfaces.empty()) e["surfaces"] = item.surfaces;
            items_json.push_back(std::move(e));
        }
        auto os = detail::open_out(path);
        os << nlohmann::json{{"version", 1}, {"items", items_json}}.dump(2) << "\n";
    }
};

} // namespace lfseg
