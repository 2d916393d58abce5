#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lfseg/core/io.hpp"
#include "lfseg/core/png_io.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"

using namespace lfseg;
namespace fs = std::filesystem;

static fs::path temp_dir(const char* suffix) {
    auto p = fs::temp_directory_path() / (std::string("lfseg_core_") + suffix);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TEST_CASE("rng is deterministic and forks are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c(42);
    Rng f1 = c.fork(1), f2 = c.fork(2);
    REQUIRE(f1.next_u64() != f2.next_u64());
    // fork() must not advance the parent
    Rng d(42);
    (void)d.fork(7);
    Rng e(42);
    REQUIRE(d.next_u64() == e.next_u64());
    double m = 0;
    Rng g(7);
    for (int i = 0; i < 10000; ++i) m += g.uniform();
    REQUIRE(std::abs(m / 10000 - 0.5) < 0.02);
    double gm = 0;
    for (int i = 0; i < 10000; ++i) gm += g.gamma_mean_one(4);
    REQUIRE(std::abs(gm / 10000 - 1.0) < 0.03);
}

TEST_CASE("tensor layout: plane-contiguous, matrix view per channel") {
    TensorF t(2, 3, 4);
    t.at(1, 2, 3) = 5.0f;
    REQUIRE(t.plane(1)[2 * 4 + 3] == 5.0f);
    auto m = t.mat();
    REQUIRE(m.rows() == 12);
    REQUIRE(m.cols() == 2);
    REQUIRE(m(2 * 4 + 3, 1) == 5.0f);
}

TEST_CASE("octv round-trip is bit-exact over random volumes") {
    auto dir = temp_dir("octv");
    Rng rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        OctVolume vol;
        vol.num_bscans = 1 + rng.uniform_int(4);
        vol.height = 16 + rng.uniform_int(20);
        vol.width = 16 + rng.uniform_int(20);
        vol.spacing_um = {rng.uniform(1, 10), rng.uniform(1, 20), rng.uniform(1, 20)};
        vol.voxels.resize(static_cast<std::size_t>(vol.num_bscans) * vol.height * vol.width);
        for (auto& v : vol.voxels) v = static_cast<float>(rng.uniform());
        const auto path = dir / ("v" + std::to_string(trial) + ".octv");
        write_volume(path, vol);
        const OctVolume back = read_volume(path);
        REQUIRE(back.num_bscans == vol.num_bscans);
        REQUIRE(back.height == vol.height);
        REQUIRE(back.width == vol.width);
        REQUIRE(back.spacing_um == vol.spacing_um);
        REQUIRE(back.voxels == vol.voxels); // bitwise: float == float round trip
    }
}

TEST_CASE("octv rejects bad magic and truncated payloads") {
    auto dir = temp_dir("octv_err");
    OctVolume vol;
    vol.num_bscans = 2;
    vol.height = 16;
    vol.width = 16;
    vol.voxels.assign(2 * 16 * 16, 0.25f);
    const auto path = dir / "vol.octv";
    write_volume(path, vol);

    SECTION("magic mismatch -> FormatError") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(6);
        f.write("99", 2); // OCTVOL01 -> OCTVOL99
        f.close();
        REQUIRE_THROWS_AS(read_volume(path), FormatError);
    }
    SECTION("payload short -> CorruptFile") {
        const auto truncated = dir / "short.octv";
        const auto size = fs::file_size(path);
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes(size - 1024 * sizeof(float));
        in.read(bytes.data(), bytes.size());
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), bytes.size());
        out.close();
        REQUIRE_THROWS_AS(read_volume(truncated), CorruptFile);
    }
    SECTION("trailing bytes -> CorruptFile") {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f.write("xx", 2);
        f.close();
        REQUIRE_THROWS_AS(read_volume(path), CorruptFile);
    }
}

TEST_CASE("named tensor container reloads bit-exactly") {
    auto dir = temp_dir("tns");
    Rng rng(3);
    std::vector<NamedTensor> tensors;
    for (int i = 0; i < 5; ++i) {
        NamedTensor t;
        t.name = "layer" + std::to_string(i) + ".w";
        t.shape = {1 + rng.uniform_int(8), 1 + rng.uniform_int(8), 3, 3};
        std::size_t n = 9;
        for (int k = 0; k < 2; ++k) n *= t.shape[k];
        t.values.resize(n);
        for (auto& v : t.values) v = static_cast<float>(rng.normal());
        tensors.push_back(std::move(t));
    }
    write_tensors(dir / "p.tns", tensors);
    const auto back = read_tensors(dir / "p.tns");
    REQUIRE(back.size() == tensors.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        REQUIRE(back[i].name == tensors[i].name);
        REQUIRE(back[i].shape == tensors[i].shape);
        REQUIRE(back[i].values == tensors[i].values);
    }
}

TEST_CASE("gray8 png round-trips label maps") {
    auto dir = temp_dir("png");
    Grid<std::uint8_t> img(20, 31);
    Rng rng(5);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform_int(8);
    write_png_gray8(dir / "l.png", img);
    const auto back = read_png_gray8(dir / "l.png");
    REQUIRE(back == img);
    REQUIRE_THROWS_AS(read_png_gray8(dir / "missing.png"), IoError);
}

TEST_CASE("manifest saves and loads") {
    auto dir = temp_dir("manifest");
    Manifest m;
    m.root = dir;
    m.items.push_back({"vol000", "vol000.octv", {"vol000/b000.png", "vol000/b001.png"}, "vol000_surfaces.json"});
    m.items.push_back({"vol001", "vol001.octv", {"vol001/b000.png"}, ""});
    m.save(dir / "manifest.json");
    const Manifest back = Manifest::load(dir / "manifest.json");
    REQUIRE(back.items.size() == 2);
    REQUIRE(back.items[0].id == "vol000");
    REQUIRE(back.items[0].labels.size() == 2);
    REQUIRE(back.items[0].surfaces == "vol000_surfaces.json");
    REQUIRE(back.items[1].surfaces.empty());
    REQUIRE(back.resolve(back.items[0].volume) == dir / "vol000.octv");
}
