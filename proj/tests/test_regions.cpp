#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "crystalseg/regions.hpp"
#include "oracles.hpp"

using namespace crystalseg;

namespace {
BinaryMask make_mask(int w, int h, std::vector<std::uint8_t> bits) {
    BinaryMask m;
    m.width = w;
    m.height = h;
    m.bits = std::move(bits);
    return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.bits.size(); ++i)
        if (a.bits[i] && !b.bits[i]) return false;
    return true;
}
} // namespace

TEST_CASE("closing bridges a one-pixel gap in a strip") {
    const BinaryMask strip = make_mask(5, 1, {1, 0, 1, 1, 1});
    const BinaryMask closed = binary_close(strip, 1);
    CHECK(closed.bits == std::vector<std::uint8_t>{1, 1, 1, 1, 1});
}

TEST_CASE("opening leaves a solid square untouched and erases specks") {
    BinaryMask sq = make_mask(10, 10, std::vector<std::uint8_t>(100, 1));
    CHECK(binary_open(sq, 2) == sq);

    BinaryMask speck = make_mask(9, 9, std::vector<std::uint8_t>(81, 0));
    speck.bits[4 * 9 + 4] = 1;
    CHECK(binary_open(speck, 1).count() == 0);
}

TEST_CASE("dilation grows a point into a pixel disk") {
    BinaryMask point = make_mask(9, 9, std::vector<std::uint8_t>(81, 0));
    point.bits[4 * 9 + 4] = 1;
    const BinaryMask grown = binary_dilate(point, 2);
    std::size_t expected = 0;
    for (int dr = -2; dr <= 2; ++dr)
        for (int dc = -2; dc <= 2; ++dc)
            if (dr * dr + dc * dc <= 4) expected += 1;
    CHECK(grown.count() == expected);  // 13 pixels for radius 2
    CHECK(grown.at(4, 6));
    CHECK_FALSE(grown.at(6, 6));
}

TEST_CASE("morphology laws hold on random masks") {
    SplitMix64 rng{11};
    for (int trial = 0; trial < 25; ++trial) {
        const BinaryMask m = oracle::random_mask(32, 32, 0.4, rng);
        const int radius = 1 + static_cast<int>(trial % 3);
        const BinaryMask opened = binary_open(m, radius);
        const BinaryMask closed = binary_close(m, radius);
        CHECK(subset(opened, m));
        CHECK(subset(m, closed));
        CHECK(binary_open(opened, radius) == opened);
        CHECK(binary_close(closed, radius) == closed);
    }
}

TEST_CASE("erosion treats out-of-bounds as foreground") {
    // A full frame is a fixed point of erosion; a band touching the border
    // keeps its border pixels.
    const BinaryMask full = make_mask(6, 6, std::vector<std::uint8_t>(36, 1));
    CHECK(binary_erode(full, 2) == full);

    BinaryMask band = make_mask(8, 4, std::vector<std::uint8_t>(32, 0));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) band.bits[static_cast<std::size_t>(r) * 8 + c] = 1;
    const BinaryMask eroded = binary_erode(band, 1);
    CHECK(eroded.at(0, 0));       // corner survives: all out-of-bounds neighbors count as set
    CHECK(eroded.at(2, 1));
    CHECK_FALSE(eroded.at(2, 2)); // interior edge of the band is eaten
}

TEST_CASE("radius zero is the identity and negative radii are rejected") {
    SplitMix64 rng{17};
    const BinaryMask m = oracle::random_mask(10, 10, 0.5, rng);
    CHECK(binary_erode(m, 0) == m);
    CHECK(binary_dilate(m, 0) == m);
    CHECK_THROWS_AS(binary_erode(m, -1), std::invalid_argument);
}

TEST_CASE("connected components match a flood-fill oracle") {
    SplitMix64 rng{23};
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask m = oracle::random_mask(24, 24, 0.35, rng);
        const LabelImage got = connected_components(m);
        int want_count = 0;
        const std::vector<int> want = oracle::flood_fill_labels(m, &want_count);
        CHECK(got.count == want_count);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.labels[i] == want[i]);
    }
}

TEST_CASE("diagonal pixels join one component") {
    const BinaryMask m = make_mask(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const LabelImage lab = connected_components(m);
    CHECK(lab.count == 1);
}

TEST_CASE("labels follow raster order of first encounter") {
    const BinaryMask m = make_mask(5, 3, {0, 0, 0, 0, 1,   // blob B first row
                                          1, 0, 0, 0, 1,   // blob A starts later in raster order?
                                          1, 0, 0, 0, 0});
    const LabelImage lab = connected_components(m);
    CHECK(lab.at(0, 4) == 1);  // first pixel encountered
    CHECK(lab.at(1, 0) == 2);
    CHECK(lab.at(2, 0) == 2);
}

TEST_CASE("region extraction keeps per-label masks and preserves area") {
    // Two blobs close enough that each crop window overlaps the other blob.
    BinaryMask m = make_mask(20, 10, std::vector<std::uint8_t>(200, 0));
    GrayImage img(20, 10, 0.0);
    for (int r = 2; r < 6; ++r)
        for (int c = 2; c < 6; ++c) m.bits[static_cast<std::size_t>(r) * 20 + c] = 1;
    for (int r = 2; r < 6; ++r)
        for (int c = 9; c < 13; ++c) m.bits[static_cast<std::size_t>(r) * 20 + c] = 1;
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>(i);

    const LabelImage lab = connected_components(m);
    REQUIRE(lab.count == 2);
    const auto regions = extract_regions(lab, img, 1, SIZE_MAX, 8);
    REQUIRE(regions.size() == 2);
    std::size_t total = 0;
    for (const Region& region : regions) {
        CHECK(region.mask_crop.count() == 16);
        total += region.mask_crop.count();
        // Crop pixels must match the source image at the crop offset.
        for (int r = 0; r < region.image_crop.height; ++r)
            for (int c = 0; c < region.image_crop.width; ++c)
                CHECK(region.image_crop.at(r, c) ==
                      img.at(region.crop_row + r, region.crop_col + c));
    }
    CHECK(total == m.count());
    // Margins grew the windows to overlap; masks must still be disjoint labels.
    CHECK(regions[0].bbox_min_col == 2);
    CHECK(regions[0].bbox_max_col == 5);
    CHECK(regions[1].bbox_min_col == 9);
}

TEST_CASE("margin clamps at the image border") {
    BinaryMask m = make_mask(8, 8, std::vector<std::uint8_t>(64, 0));
    m.bits[0] = 1;  // single pixel at (0,0)
    GrayImage img(8, 8, 1.0);
    const auto regions = extract_regions(connected_components(m), img, 1, SIZE_MAX, 5);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].crop_row == 0);
    CHECK(regions[0].crop_col == 0);
    CHECK(regions[0].image_crop.width == 6);  // bbox 1 wide + margin 5, clamped left
    CHECK(regions[0].image_crop.height == 6);
}

TEST_CASE("area filters drop and report out-of-range components") {
    BinaryMask m = make_mask(16, 16, std::vector<std::uint8_t>(256, 0));
    m.bits[0] = 1;  // area 1 -> too small
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) m.bits[static_cast<std::size_t>(r) * 16 + c] = 1;  // 64
    GrayImage img(16, 16, 0.0);
    RegionFilterReport report;
    const auto regions =
        extract_regions(connected_components(m), img, 4, 100, 2, &report);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].area == 64);
    CHECK(report.too_small == 1);
    CHECK(report.too_large == 0);

    RegionFilterReport report2;
    const auto none = extract_regions(connected_components(m), img, 4, 50, 2, &report2);
    CHECK(none.empty());
    CHECK(report2.too_large == 1);
}

TEST_CASE("a horizontal line has the documented axis length and eccentricity") {
    BinaryMask m = make_mask(9, 1, std::vector<std::uint8_t>(9, 1));
    GrayImage img(9, 1, 0.0);
    const auto regions = extract_regions(connected_components(m), img, 1, SIZE_MAX, 0);
    REQUIRE(regions.size() == 1);
    const RegionProps props = region_props(regions[0]);
    // Column variance of 9 unit-spaced points: (9^2 - 1) / 12.
    CHECK(props.major_axis == Catch::Approx(4.0 * std::sqrt(80.0 / 12.0)));
    CHECK(props.minor_axis == 0.0);
    CHECK(props.eccentricity == 1.0);
    CHECK(props.centroid_col == Catch::Approx(4.0));
    CHECK(props.centroid_row == Catch::Approx(0.0));
}

TEST_CASE("a pixel disk is round: near-zero eccentricity, matching diameter") {
    const int n = 25, rad = 10;
    BinaryMask m = make_mask(n, n, std::vector<std::uint8_t>(n * n, 0));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if ((r - 12) * (r - 12) + (c - 12) * (c - 12) <= rad * rad)
                m.bits[static_cast<std::size_t>(r) * n + c] = 1;
    GrayImage img(n, n, 0.0);
    const auto regions = extract_regions(connected_components(m), img, 1, SIZE_MAX, 2);
    REQUIRE(regions.size() == 1);
    const RegionProps props = region_props(regions[0]);
    const double area = static_cast<double>(regions[0].area);
    CHECK(props.equivalent_diameter == Catch::Approx(std::sqrt(4.0 * area / std::numbers::pi)));
    CHECK(props.equivalent_diameter == Catch::Approx(2.0 * rad).epsilon(0.05));
    CHECK(props.eccentricity < 0.1);
    CHECK(props.major_axis == Catch::Approx(props.minor_axis).epsilon(0.05));
    CHECK_FALSE(props.area_nm2.has_value());

    const RegionProps scaled = region_props(regions[0], 0.5);
    REQUIRE(scaled.area_nm2.has_value());
    CHECK(*scaled.area_nm2 == Catch::Approx(area * 0.25));
}

TEST_CASE("centroids are reported in tile coordinates") {
    BinaryMask m = make_mask(16, 16, std::vector<std::uint8_t>(256, 0));
    for (int r = 10; r < 12; ++r)
        for (int c = 6; c < 8; ++c) m.bits[static_cast<std::size_t>(r) * 16 + c] = 1;
    GrayImage img(16, 16, 0.0);
    const auto regions = extract_regions(connected_components(m), img, 1, SIZE_MAX, 3);
    REQUIRE(regions.size() == 1);
    const RegionProps props = region_props(regions[0]);
    CHECK(props.centroid_row == Catch::Approx(10.5));
    CHECK(props.centroid_col == Catch::Approx(6.5));
}
