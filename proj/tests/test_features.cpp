#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "crystalseg/features.hpp"

using namespace crystalseg;

namespace {
Region make_region(const GrayImage& crop, const BinaryMask& mask) {
    Region region;
    region.image_crop = crop;
    region.mask_crop = mask;
    region.area = mask.count();
    return region;
}

BinaryMask full_mask(int w, int h) {
    BinaryMask m;
    m.width = w;
    m.height = h;
    m.bits.assign(static_cast<std::size_t>(w) * h, 1);
    return m;
}
} // namespace

TEST_CASE("frame size grows to the next multiple of 64 only when needed") {
    CHECK(fitted_pad(128, 64, 64) == 128);
    CHECK(fitted_pad(128, 128, 128) == 128);
    CHECK(fitted_pad(128, 129, 40) == 192);
    CHECK(fitted_pad(128, 40, 300) == 320);
    CHECK(fitted_pad(64, 65, 65) == 128);
    CHECK_THROWS_AS(fitted_pad(0, 10, 10), std::invalid_argument);
}

TEST_CASE("a constant region has zero spectral features and zero spread") {
    const Region region = make_region(GrayImage(20, 20, 0.65), full_mask(20, 20));
    const FeatureVector fv = compute_features(region, 64);
    CHECK(fv.f1 == 0.0);
    CHECK(fv.f2 == 0.0);
    CHECK(fv.f3 == 0.0);
    CHECK(fv.f4 == Catch::Approx(0.65));
    CHECK(fv.f5 == 0.0);
}

TEST_CASE("fringes move the profile's center of mass to their frequency") {
    const int n = 32, pad = 128;
    const double period = 6.0;
    GrayImage crop(n, n, 0.5);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            crop.at(r, c) += 0.25 * std::cos(2.0 * std::numbers::pi * c / period);
    const Region region = make_region(crop, full_mask(n, n));
    const FeatureVector fv = compute_features(region, pad);
    // In a pad x pad frame the fringe lands near radius pad / period.
    const double expected = pad / period;
    CHECK(fv.f3 == Catch::Approx(expected).margin(4.0));
    CHECK(fv.f1 > 0.0);
    CHECK(fv.f2 > 0.0);
}

TEST_CASE("pixels outside the mask are ignored entirely") {
    GrayImage crop(16, 16, 0.5);
    BinaryMask mask = full_mask(16, 16);
    for (int c = 0; c < 16; ++c) {
        mask.bits[c] = 0;                      // exclude the first row
        crop.at(0, c) = 1e6;                   // and fill it with garbage
    }
    const Region region = make_region(crop, mask);
    const FeatureVector fv = compute_features(region, 64);

    GrayImage clean = crop;
    for (int c = 0; c < 16; ++c) clean.at(0, c) = 0.0;  // different garbage
    const FeatureVector fv2 = compute_features(make_region(clean, mask), 64);
    CHECK(fv.f1 == fv2.f1);
    CHECK(fv.f2 == fv2.f2);
    CHECK(fv.f3 == fv2.f3);
    CHECK(fv.f4 == fv2.f4);
    CHECK(fv.f5 == fv2.f5);
    CHECK(fv.f4 == Catch::Approx(0.5));
    CHECK(fv.f5 == 0.0);
}

TEST_CASE("intensity scaling scales f1, f2, f4, f5 and fixes f3") {
    const int n = 24;
    SplitMix64 rng{31};
    GrayImage crop(n, n);
    for (auto& p : crop.pixels) p = 0.2 + 0.6 * rng.uniform();
    const Region region = make_region(crop, full_mask(n, n));
    const FeatureVector base = compute_features(region, 64);

    GrayImage doubled = crop;
    for (auto& p : doubled.pixels) p *= 2.0;
    const FeatureVector twice = compute_features(make_region(doubled, full_mask(n, n)), 64);
    CHECK(twice.f1 == Catch::Approx(2.0 * base.f1));
    CHECK(twice.f2 == Catch::Approx(2.0 * base.f2));
    CHECK(twice.f3 == Catch::Approx(base.f3));
    CHECK(twice.f4 == Catch::Approx(2.0 * base.f4));
    CHECK(twice.f5 == Catch::Approx(2.0 * base.f5));
}

TEST_CASE("the DC bin is excluded unless requested") {
    // A region whose mean survives into the spectrum only via the DC bin:
    // with mean-centering the DC bin is zero, so including it dilutes the
    // profile mean and pulls the center of mass toward zero radius.
    const int n = 16;
    GrayImage crop(n, n, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            crop.at(r, c) = 0.5 + 0.3 * std::cos(2.0 * std::numbers::pi * 4.0 * c / n);
    const Region region = make_region(crop, full_mask(n, n));
    const FeatureVector drop = compute_features(region, 64, false);
    const FeatureVector keep = compute_features(region, 64, true);
    CHECK(keep.f3 < drop.f3);  // extra zero-radius bin lowers the center of mass
    CHECK(keep.f1 < drop.f1);  // and dilutes the mean with a zero-value bin
}

TEST_CASE("oversized crops are framed without cropping information") {
    // 150 px wide crop with a fringe: frame grows to 192 and the fringe is
    // still recovered at the right radius.
    const int w = 150, h = 40;
    const double period = 5.0;
    GrayImage crop(w, h, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            crop.at(r, c) = std::cos(2.0 * std::numbers::pi * c / period);
    const Region region = make_region(crop, full_mask(w, h));
    const int pad = fitted_pad(128, w, h);
    REQUIRE(pad == 192);
    const FeatureVector fv = compute_features(region, 128);
    CHECK(fv.f3 == Catch::Approx(pad / period).margin(5.0));
}

TEST_CASE("an empty region is rejected") {
    BinaryMask empty;
    empty.width = 4;
    empty.height = 4;
    empty.bits.assign(16, 0);
    const Region region = make_region(GrayImage(4, 4, 1.0), empty);
    CHECK_THROWS_AS(compute_features(region, 64), std::invalid_argument);
}
