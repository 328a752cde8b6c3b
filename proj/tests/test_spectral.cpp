#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "crystalseg/spectral.hpp"
#include "oracles.hpp"

using namespace crystalseg;

namespace {
GrayImage random_image(int w, int h, SplitMix64& rng) {
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = rng.uniform() * 2.0 - 1.0;
    return img;
}

double max_rel_error(const Spectrum& got, const Spectrum& want) {
    double scale = 0.0;
    for (const auto& v : want.values) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, 1e-300);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.values.size(); ++i)
        worst = std::max(worst, std::abs(got.values[i] - want.values[i]) / scale);
    return worst;
}
} // namespace

TEST_CASE("forward transform matches the direct summation on mixed sizes") {
    SplitMix64 rng{42};
    // Powers of two, primes, and composites with odd factors.
    for (const auto& [w, h] : std::vector<std::pair<int, int>>{
             {1, 1}, {2, 3}, {4, 4}, {5, 7}, {6, 6}, {8, 3}, {12, 10}, {16, 16}, {13, 11}}) {
        const GrayImage img = random_image(w, h, rng);
        const Spectrum fast = dft2(img);
        const Spectrum slow = oracle::dft2_direct(img);
        INFO("size " << w << "x" << h);
        CHECK(max_rel_error(fast, slow) < 1e-9);
    }
}

TEST_CASE("inverse transform recovers the image") {
    SplitMix64 rng{7};
    for (const auto& [w, h] : std::vector<std::pair<int, int>>{{3, 5}, {8, 8}, {12, 7}}) {
        const GrayImage img = random_image(w, h, rng);
        double residue = 1.0;
        const GrayImage back = idft2(dft2(img), &residue);
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(back.pixels[i] == Catch::Approx(img.pixels[i]).margin(1e-12));
        CHECK(residue < 1e-12);
    }
}

TEST_CASE("Parseval's identity holds on random 64x64 images") {
    SplitMix64 rng{99};
    for (int trial = 0; trial < 5; ++trial) {
        const GrayImage img = random_image(64, 64, rng);
        const Spectrum spec = dft2(img);
        double spatial = 0.0;
        for (double p : img.pixels) spatial += p * p;
        double spectral = 0.0;
        for (const auto& v : spec.values) spectral += std::norm(v);
        spectral /= static_cast<double>(img.size());
        CHECK(std::abs(spatial - spectral) / spatial < 1e-6);
    }
}

TEST_CASE("DC bin is the plain pixel sum and sits at (0,0)") {
    SplitMix64 rng{3};
    const GrayImage img = random_image(9, 4, rng);
    double sum = 0.0;
    for (double p : img.pixels) sum += p;
    const Spectrum spec = dft2(img);
    CHECK(spec.at(0, 0).real() == Catch::Approx(sum).margin(1e-10));
    CHECK(spec.at(0, 0).imag() == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("centered frequency wraps the upper half negative") {
    CHECK(centered_freq(0, 4) == 0);
    CHECK(centered_freq(1, 4) == 1);
    CHECK(centered_freq(2, 4) == -2);
    CHECK(centered_freq(3, 4) == -1);
    CHECK(centered_freq(2, 5) == 2);
    CHECK(centered_freq(3, 5) == -2);
    CHECK(centered_freq(4, 5) == -1);
}

TEST_CASE("annulus keeps radii in the half-open band") {
    const BinaryMask ring = annulus_mask(4, 4, 1.0, 2.0);
    // DC excluded, |freq| exactly 2 excluded, diagonal sqrt(2) included.
    CHECK_FALSE(ring.at(0, 0));
    CHECK(ring.at(0, 1));
    CHECK(ring.at(1, 0));
    CHECK(ring.at(1, 1));
    CHECK_FALSE(ring.at(0, 2));  // centered frequency -2 -> radius 2, not < 2
    CHECK_FALSE(ring.at(2, 2));  // radius sqrt(8)

    const BinaryMask high = annulus_mask(4, 4, 1.0,
                                         std::numeric_limits<double>::infinity());
    CHECK_FALSE(high.at(0, 0));
    CHECK(high.at(2, 2));

    CHECK_THROWS_AS(annulus_mask(4, 4, -1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(annulus_mask(4, 4, 2.0, 2.0), std::invalid_argument);
}

TEST_CASE("a pure cosine concentrates its radial profile at its frequency") {
    const int n = 32, k = 5;
    GrayImage img(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            img.at(r, c) = std::cos(2.0 * std::numbers::pi * k * c / n);
    const RadialProfile prof = radial_profile(dft2(img));
    REQUIRE(prof.values.size() == static_cast<std::size_t>(n / 2 + 1));
    CHECK(prof.first_radius == 0);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < prof.values.size(); ++i)
        if (prof.values[i] > prof.values[peak]) peak = i;
    CHECK(peak == static_cast<std::size_t>(k));
    // Energy at other radii is numerically zero.
    for (std::size_t i = 0; i < prof.values.size(); ++i)
        if (i != static_cast<std::size_t>(k)) CHECK(prof.values[i] < 1e-9 * prof.values[peak]);
}

TEST_CASE("radial profile bin counts cover the included frequencies") {
    const RadialProfile prof = radial_profile(dft2(GrayImage(8, 8, 1.0)));
    std::size_t total = 0;
    for (std::size_t c : prof.counts) total += c;
    // Only bins with radius <= 4 participate for an 8x8 spectrum.
    std::size_t expected = 0;
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            const double fu = centered_freq(u, 8), fv = centered_freq(v, 8);
            if (static_cast<std::size_t>(std::floor(std::hypot(fu, fv))) <= 4) expected += 1;
        }
    CHECK(total == expected);
    CHECK(prof.counts[0] == 1);  // DC alone in bin zero
}

TEST_CASE("profile statistics follow the textbook formulas") {
    RadialProfile prof;
    prof.first_radius = 0;
    prof.values = {2.0, 4.0, 6.0};
    prof.counts = {1, 4, 8};
    const ProfileStats st = profile_stats(prof);
    CHECK(st.mean == Catch::Approx(4.0));
    CHECK(st.stddev == Catch::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(st.com == Catch::Approx((0.0 * 2 + 1.0 * 4 + 2.0 * 6) / 12.0));

    const RadialProfile tail = drop_dc(prof);
    REQUIRE(tail.values.size() == 2);
    CHECK(tail.first_radius == 1);
    const ProfileStats ts = profile_stats(tail);
    CHECK(ts.mean == Catch::Approx(5.0));
    CHECK(ts.com == Catch::Approx((1.0 * 4 + 2.0 * 6) / 10.0));

    RadialProfile empty;
    CHECK_THROWS_AS(profile_stats(empty), std::invalid_argument);

    RadialProfile zeros;
    zeros.values = {0.0, 0.0};
    zeros.counts = {1, 4};
    CHECK(profile_stats(zeros).com == 0.0);
}
