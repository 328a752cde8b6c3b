#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "crystalseg/core.hpp"

namespace crystalseg {

/// Median filter with a k×k window (k odd). Windows are clamped at the image
/// border, which replicates edge pixels.
inline GrayImage median_filter(const GrayImage& img, int k = 3) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("median window must be odd and positive");
    if (k > std::min(img.width, img.height))
        throw std::invalid_argument("median window larger than image");
    const int half = k / 2;
    GrayImage out(img.width, img.height);
    out.pixel_size_nm = img.pixel_size_nm;
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(k) * k);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            window.clear();
            for (int dr = -half; dr <= half; ++dr) {
                const int rr = std::clamp(r + dr, 0, img.height - 1);
                for (int dc = -half; dc <= half; ++dc) {
                    const int cc = std::clamp(c + dc, 0, img.width - 1);
                    window.push_back(img.at(rr, cc));
                }
            }
            auto mid = window.begin() + window.size() / 2;
            std::nth_element(window.begin(), mid, window.end());
            out.at(r, c) = *mid;
        }
    }
    return out;
}

/// Min-max normalization to [0,1]. A constant image maps to all zeros.
inline GrayImage normalize(const GrayImage& img) {
    const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const double lo = img.pixels.empty() ? 0.0 : *lo_it;
    const double hi = img.pixels.empty() ? 0.0 : *hi_it;
    GrayImage out(img.width, img.height);
    out.pixel_size_nm = img.pixel_size_nm;
    if (hi > lo) {
        const double span = hi - lo;
        for (std::size_t i = 0; i < img.size(); ++i) out.pixels[i] = (img.pixels[i] - lo) / span;
    }
    return out;
}

/// Member `index` of the dihedral group acting on a square image:
/// index = rotation + 4*mirror, rotation in quarter turns clockwise,
/// mirror = horizontal flip applied after rotating. Index 0 is the identity;
/// the 8 indices enumerate every rotation/flip combination once.
inline GrayImage dihedral_augment(const GrayImage& img, int index) {
    if (img.width != img.height)
        throw std::invalid_argument("dihedral augmentation requires a square image");
    if (index < 0 || index > 7) throw std::invalid_argument("dihedral index must be in 0..7");
    const int n = img.width;
    const int rot = index % 4;
    const bool mirror = index >= 4;
    GrayImage out(n, n);
    out.pixel_size_nm = img.pixel_size_nm;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            int sr = r, sc = c;
            for (int q = 0; q < rot; ++q) {  // invert one clockwise quarter turn
                const int tr = n - 1 - sc;
                sc = sr;
                sr = tr;
            }
            const int dest_c = mirror ? n - 1 - c : c;
            out.at(r, dest_c) = img.at(sr, sc);
        }
    }
    return out;
}

} // namespace crystalseg
