#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "crystalseg/core.hpp"
#include "crystalseg/spectral.hpp"

namespace crystalseg {

/// Index k of the best split of a histogram into bins [0..k] vs [k+1..end],
/// maximizing between-class variance ω₀·ω₁·(μ₀−μ₁)². Ties break to the lower
/// split. Throws data_error("degenerate histogram") when every sample falls
/// in a single bin (no split separates anything).
inline int otsu_split(const std::vector<std::uint64_t>& hist) {
    const int bins = static_cast<int>(hist.size());
    if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
    std::uint64_t total = 0;
    double total_weighted = 0.0;
    int occupied = 0;
    for (int b = 0; b < bins; ++b) {
        total += hist[b];
        total_weighted += static_cast<double>(b) * static_cast<double>(hist[b]);
        occupied += hist[b] > 0 ? 1 : 0;
    }
    if (occupied < 2) throw data_error("degenerate histogram");

    int best = -1;
    double best_var = -1.0;
    std::uint64_t n0 = 0;
    double sum0 = 0.0;
    for (int k = 0; k + 1 < bins; ++k) {
        n0 += hist[k];
        sum0 += static_cast<double>(k) * static_cast<double>(hist[k]);
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double w0 = static_cast<double>(n0) / static_cast<double>(total);
        const double w1 = static_cast<double>(n1) / static_cast<double>(total);
        const double mu0 = sum0 / static_cast<double>(n0);
        const double mu1 = (total_weighted - sum0) / static_cast<double>(n1);
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best = k;
        }
    }
    if (best < 0) throw data_error("degenerate histogram");
    return best;
}

struct OtsuResult {
    double threshold = 0.0;
    BinaryMask mask;
};

/// Otsu's method on an image normalized to [0,1]. The returned threshold is
/// the histogram bin boundary maximizing between-class variance; the mask
/// marks pixels strictly above it when particles_bright, strictly below
/// otherwise.
inline OtsuResult otsu_threshold(const GrayImage& img, int bins = 256,
                                 bool particles_bright = true) {
    if (bins < 2) throw std::invalid_argument("bins must be >= 2");
    std::vector<std::uint64_t> hist(bins, 0);
    for (double v : img.pixels) {
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("otsu_threshold expects intensities in [0,1]");
        int b = static_cast<int>(v * bins);
        hist[std::min(b, bins - 1)] += 1;
    }
    const int k = otsu_split(hist);
    OtsuResult res;
    res.threshold = static_cast<double>(k + 1) / static_cast<double>(bins);
    res.mask = BinaryMask(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const bool above = img.pixels[i] > res.threshold;
        res.mask.bits[i] = (above == particles_bright) ? 1 : 0;
    }
    return res;
}

/// Separable Gaussian blur, kernel truncated at 3σ, borders edge-replicated.
/// sigma = 0 returns the input unchanged.
inline GrayImage gaussian_smooth(const GrayImage& img, double sigma) {
    if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
    if (sigma == 0.0) return img;
    const int radius = static_cast<int>(3.0 * sigma);
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        kernel[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += kernel[d + radius];
    }
    for (double& k : kernel) k /= sum;

    GrayImage tmp(img.width, img.height);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += kernel[d + radius] * img.at(r, std::clamp(c + d, 0, img.width - 1));
            tmp.at(r, c) = acc;
        }
    }
    GrayImage out(img.width, img.height);
    out.pixel_size_nm = img.pixel_size_nm;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += kernel[d + radius] * tmp.at(std::clamp(r + d, 0, img.height - 1), c);
            out.at(r, c) = acc;
        }
    }
    return out;
}

enum class AnnulusMode { keep, suppress };

/// Band-pass (or band-stop) segmentation: transform, zero frequencies outside
/// (or inside) the annulus, invert, rectify, smooth, and threshold at a
/// fraction of the peak response. A response with zero maximum (e.g. an
/// all-zero image) yields an empty mask.
inline BinaryMask fourier_filter_segment(const GrayImage& img, double r_in, double r_out,
                                         double smooth_sigma = 2.0,
                                         AnnulusMode mode = AnnulusMode::keep,
                                         double threshold = 0.3) {
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("threshold must be in [0,1]");
    Spectrum spec = dft2(img);
    const BinaryMask annulus = annulus_mask(img.width, img.height, r_in, r_out);
    const bool keep = mode == AnnulusMode::keep;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const bool inside = annulus.bits[i] != 0;
        if (inside != keep) spec.values[i] = 0.0;
    }
    GrayImage response = idft2(spec);
    for (double& v : response.pixels) v = std::abs(v);
    response = gaussian_smooth(response, smooth_sigma);

    const double peak = *std::max_element(response.pixels.begin(), response.pixels.end());
    BinaryMask mask(img.width, img.height);
    if (peak <= 0.0) return mask;
    const double cut = threshold * peak;
    for (std::size_t i = 0; i < response.size(); ++i)
        mask.bits[i] = response.pixels[i] >= cut ? 1 : 0;
    return mask;
}

/// bit = 1 iff probability ≥ t.
inline BinaryMask threshold_probmap(const ProbMap& prob, double t = 0.5) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("threshold must be in [0,1]");
    BinaryMask mask(prob.width, prob.height);
    for (std::size_t i = 0; i < prob.probs.size(); ++i)
        mask.bits[i] = prob.probs[i] >= t ? 1 : 0;
    return mask;
}

} // namespace crystalseg
