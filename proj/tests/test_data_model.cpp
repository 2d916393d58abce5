#include <catch2/catch_amalgamated.hpp>

#include "lfseg/core/rng.hpp"
#include "lfseg/data/types.hpp"
#include "lfseg/phantom/phantom.hpp"

using namespace lfseg;

namespace {

OctVolume ramp_volume(int nb, int h, int w) {
    OctVolume vol;
    vol.num_bscans = nb;
    vol.height = h;
    vol.width = w;
    vol.voxels.resize(static_cast<std::size_t>(nb) * h * w);
    for (int b = 0; b < nb; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) vol.at(b, y, x) = static_cast<float>(b) / nb;
    return vol;
}

} // namespace

TEST_CASE("class schemes") {
    REQUIRE(ClassScheme::stage1().num_classes() == 3);
    REQUIRE(ClassScheme::stage2().num_classes() == 8);
    REQUIRE(ClassScheme::stage2().is_retina(7));
    REQUIRE(ClassScheme::stage2().is_retina(3));
    REQUIRE_FALSE(ClassScheme::stage2().is_retina(0));
    REQUIRE_FALSE(ClassScheme::stage2().is_retina(6));
    REQUIRE(ClassScheme::stage1().is_retina(1));
    REQUIRE_FALSE(ClassScheme::stage1().is_retina(2));
    REQUIRE_THROWS_AS(ClassScheme::by_name("stage3"), ConfigError);
}

TEST_CASE("extract_bscan_stack: interior and edge replication") {
    const OctVolume vol = ramp_volume(3, 16, 16);
    SECTION("interior index uses both neighbors") {
        const auto stack = extract_bscan_stack(vol, 1);
        REQUIRE(stack.channels() == 3);
        REQUIRE(stack.at(0, 0, 0) == vol.at(0, 0, 0));
        REQUIRE(stack.at(1, 0, 0) == vol.at(1, 0, 0));
        REQUIRE(stack.at(2, 0, 0) == vol.at(2, 0, 0));
    }
    SECTION("first B-scan replicates itself on the left") {
        const auto stack = extract_bscan_stack(vol, 0);
        REQUIRE(stack.at(0, 3, 3) == vol.at(0, 3, 3));
        REQUIRE(stack.at(1, 3, 3) == vol.at(0, 3, 3));
        REQUIRE(stack.at(2, 3, 3) == vol.at(1, 3, 3));
    }
    SECTION("last B-scan replicates itself on the right") {
        const auto stack = extract_bscan_stack(vol, 2);
        REQUIRE(stack.at(0, 3, 3) == vol.at(1, 3, 3));
        REQUIRE(stack.at(1, 3, 3) == vol.at(2, 3, 3));
        REQUIRE(stack.at(2, 3, 3) == vol.at(2, 3, 3));
    }
    SECTION("out of range index throws") {
        REQUIRE_THROWS_AS(extract_bscan_stack(vol, 3), IndexError);
        REQUIRE_THROWS_AS(extract_bscan_stack(vol, -1), IndexError);
    }
    SECTION("center channel is always the requested B-scan") {
        for (int b = 0; b < vol.num_bscans; ++b) {
            const auto stack = extract_bscan_stack(vol, b);
            for (int y = 0; y < vol.height; ++y)
                for (int x = 0; x < vol.width; ++x) REQUIRE(stack.at(1, y, x) == vol.at(b, y, x));
        }
    }
    SECTION("single-channel variant") {
        const auto stack = extract_bscan_stack(vol, 1, 1);
        REQUIRE(stack.channels() == 1);
        REQUIRE(stack.at(0, 5, 5) == vol.at(1, 5, 5));
    }
}

TEST_CASE("merge_to_stage1 collapses layers and fluid into retina") {
    LabelMap m;
    m.scheme = &ClassScheme::stage2();
    m.labels = Grid<std::uint8_t>(1, 8);
    for (int x = 0; x < 8; ++x) m.labels.at(0, x) = static_cast<std::uint8_t>(x);
    const LabelMap s1 = merge_to_stage1(m);
    REQUIRE(s1.scheme == &ClassScheme::stage1());
    const std::uint8_t expected[8] = {0, 1, 1, 1, 1, 1, 2, 1};
    for (int x = 0; x < 8; ++x) REQUIRE(s1.labels.at(0, x) == expected[x]);
}

TEST_CASE("labelmap_to_surfaces on a constructed flat stack") {
    const int h = 70, w = 12;
    LabelMap m;
    m.scheme = &ClassScheme::stage2();
    m.labels = Grid<std::uint8_t>(h, w);
    const int tops[6] = {10, 20, 30, 40, 50, 60};
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) {
            std::uint8_t id = 0;
            for (int k = 0; k < 6; ++k)
                if (y >= tops[k]) id = static_cast<std::uint8_t>(k + 1);
            m.labels.at(y, x) = id;
        }
    const auto surfaces = labelmap_to_surfaces(m);
    REQUIRE(surfaces.size() == 6);
    for (int k = 0; k < 6; ++k)
        for (int x = 0; x < w; ++x) REQUIRE(surfaces[k][x] == tops[k]);
}

TEST_CASE("labelmap_to_surfaces rejects maps with missing layers") {
    LabelMap m;
    m.scheme = &ClassScheme::stage2();
    m.labels = Grid<std::uint8_t>(20, 4, 0); // all background
    REQUIRE_THROWS_AS(labelmap_to_surfaces(m), MissingLayer);
}

TEST_CASE("phantom label maps recover the generator's rounded surfaces") {
    PhantomConfig cfg;
    cfg.height = 96;
    cfg.width = 64;
    cfg.num_bscans = 2;
    cfg.fluid_probability = 0.0; // fluid may interrupt thin layers; surface identity needs none
    cfg.seed = 11;
    const PhantomVolume vol = generate_phantom(cfg);
    for (int b = 0; b < cfg.num_bscans; ++b) {
        const auto surfaces = labelmap_to_surfaces(vol.labels[b]);
        for (int k = 0; k < 6; ++k)
            for (int x = 0; x < cfg.width; ++x)
                REQUIRE(surfaces[k][x] == std::llround(vol.layers[b][k][x]));
    }
}

TEST_CASE("volume validate flags out-of-range intensity") {
    OctVolume vol = ramp_volume(1, 16, 16);
    vol.validate();
    vol.at(0, 0, 0) = 1.5f;
    REQUIRE_THROWS_AS(vol.validate(), ConfigError);
}
