#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "crystalseg/core.hpp"
#include "crystalseg/regions.hpp"
#include "crystalseg/spectral.hpp"
#include "crystalseg/util.hpp"

namespace crystalseg {

/// The 5 scalar descriptors of a region:
///   f1, f2, f3 — mean, population std, and center of mass (in radius bins)
///               of the radially averaged magnitude spectrum, DC excluded;
///   f4, f5    — mean and population std of intensity over the region's
///               own pixels.
/// f1–f3 depend on the padded frame size, so that size travels with any
/// trained model; f4, f5 do not.
struct FeatureVector {
    double f1 = 0.0, f2 = 0.0, f3 = 0.0, f4 = 0.0, f5 = 0.0;

    std::array<double, 5> as_array() const { return {f1, f2, f3, f4, f5}; }
};

/// The frame actually used for a crop: pad_to when the crop fits, otherwise
/// the next multiple of 64 that holds it.
inline int fitted_pad(int pad_to, int crop_width, int crop_height) {
    if (pad_to < 1) throw std::invalid_argument("pad_to must be positive");
    const int need = std::max(crop_width, crop_height);
    if (need <= pad_to) return pad_to;
    return next_multiple(need, 64);
}

/// Spectral branch: region pixels, centered to their mean, are placed
/// centered in a pad×pad zero frame (background pixels and padding therefore
/// coincide at zero); the frame's DFT is radially averaged, the DC bin is
/// dropped (unless include_dc), and profile statistics give f1–f3.
/// Real-space branch: mean and population std over region pixels give f4, f5.
/// A constant region has no spectral content at all, so f1 = f2 = f3 = 0
/// there.
inline FeatureVector compute_features(const Region& region, int pad_to = 128,
                                      bool include_dc = false) {
    if (region.area == 0) throw std::invalid_argument("region has no pixels");
    const BinaryMask& m = region.mask_crop;
    const GrayImage& img = region.image_crop;

    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            if (m.at(r, c)) {
                const double v = img.at(r, c);
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    const double n = static_cast<double>(region.area);
    // A constant region must come out exactly flat (zero spectral content,
    // zero spread), which naive summation would miss by rounding.
    const double mean = (lo == hi) ? lo : sum / n;
    double var = 0.0;
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            if (m.at(r, c)) var += (img.at(r, c) - mean) * (img.at(r, c) - mean);
    var /= n;

    const int pad = fitted_pad(pad_to, m.width, m.height);
    GrayImage frame(pad, pad);
    const int off_r = (pad - m.height) / 2;
    const int off_c = (pad - m.width) / 2;
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            if (m.at(r, c)) frame.at(off_r + r, off_c + c) = img.at(r, c) - mean;

    const RadialProfile profile = radial_profile(dft2(frame));
    const ProfileStats stats = profile_stats(include_dc ? profile : drop_dc(profile));

    FeatureVector fv;
    fv.f1 = stats.mean;
    fv.f2 = stats.stddev;
    fv.f3 = stats.com;
    fv.f4 = mean;
    fv.f5 = std::sqrt(var);
    return fv;
}

} // namespace crystalseg
