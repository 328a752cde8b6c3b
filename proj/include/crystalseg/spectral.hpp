#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "crystalseg/core.hpp"

namespace crystalseg {

/// 2D DFT of an image, row-major, DC term at (0,0) (unshifted).
/// Convention: forward transform is unnormalized, inverse carries 1/(W·H).
struct Spectrum {
    int width = 0;
    int height = 0;
    std::vector<std::complex<double>> values;

    Spectrum() = default;
    Spectrum(int w, int h) : width(w), height(h) {
        GrayImage::check_dims(w, h);
        values.assign(static_cast<std::size_t>(w) * h, {});
    }
    std::complex<double>& at(int row, int col) {
        return values[static_cast<std::size_t>(row) * width + col];
    }
    const std::complex<double>& at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * width + col];
    }
    std::size_t size() const { return values.size(); }
};

/// Signed frequency of DFT bin u on an axis of the given size
/// (0, 1, …, ⌈size/2⌉−1, −⌊size/2⌋, …, −1).
inline int centered_freq(int u, int size) { return u < (size + 1) / 2 ? u : u - size; }

namespace detail {

inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double turn = (inverse ? 2.0 : -2.0) * std::numbers::pi;
    std::vector<std::complex<double>> tw(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double ang = turn * static_cast<double>(k) / static_cast<double>(n);
        tw[k] = {std::cos(ang), std::sin(ang)};
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * tw[j * stride];
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }
}

// Bluestein chirp-z for arbitrary lengths. Chirp angles use j² mod 2n so the
// argument passed to sin/cos never grows with j.
inline void fft_any(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    if ((n & (n - 1)) == 0) {
        fft_pow2(a, inverse);
        return;
    }
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> w(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::uint64_t sq = (static_cast<std::uint64_t>(j) * j) % (2 * n);
        const double ang = sign * std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n);
        w[j] = {std::cos(ang), std::sin(ang)};
    }
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    std::vector<std::complex<double>> fa(m), fb(m);
    for (std::size_t j = 0; j < n; ++j) fa[j] = a[j] * w[j];
    fb[0] = std::conj(w[0]);
    for (std::size_t j = 1; j < n; ++j) fb[j] = fb[m - j] = std::conj(w[j]);
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (std::size_t j = 0; j < m; ++j) fa[j] *= fb[j];
    fft_pow2(fa, true);
    for (std::size_t j = 0; j < n; ++j) a[j] = fa[j] * w[j] / static_cast<double>(m);
}

inline void fft_rows(Spectrum& s, bool inverse) {
    std::vector<std::complex<double>> row(s.width);
    for (int r = 0; r < s.height; ++r) {
        for (int c = 0; c < s.width; ++c) row[c] = s.at(r, c);
        fft_any(row, inverse);
        for (int c = 0; c < s.width; ++c) s.at(r, c) = row[c];
    }
}

inline void fft_cols(Spectrum& s, bool inverse) {
    std::vector<std::complex<double>> col(s.height);
    for (int c = 0; c < s.width; ++c) {
        for (int r = 0; r < s.height; ++r) col[r] = s.at(r, c);
        fft_any(col, inverse);
        for (int r = 0; r < s.height; ++r) s.at(r, c) = col[r];
    }
}

} // namespace detail

/// Forward 2D DFT: F(u,v) = Σ f(x,y)·exp(−2πi(ux/W + vy/H)), unnormalized.
inline Spectrum dft2(const GrayImage& img) {
    Spectrum s(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) s.values[i] = img.pixels[i];
    detail::fft_rows(s, false);
    detail::fft_cols(s, false);
    return s;
}

/// Inverse 2D DFT with 1/(W·H) normalization. Returns the real part; the
/// largest imaginary residue (after normalization) is reported through
/// max_imag when given, as an accuracy diagnostic.
inline GrayImage idft2(const Spectrum& spec, double* max_imag = nullptr) {
    Spectrum s = spec;
    detail::fft_rows(s, true);
    detail::fft_cols(s, true);
    const double scale = 1.0 / (static_cast<double>(spec.width) * spec.height);
    GrayImage img(spec.width, spec.height);
    double residue = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        img.pixels[i] = s.values[i].real() * scale;
        residue = std::max(residue, std::abs(s.values[i].imag() * scale));
    }
    if (max_imag) *max_imag = residue;
    return img;
}

/// Mask over the (unshifted) frequency plane: 1 where
/// r_in ≤ √(fu² + fv²) < r_out in centered frequency coordinates.
/// r_out may be infinity to select the whole plane.
inline BinaryMask annulus_mask(int width, int height, double r_in, double r_out) {
    if (!(r_out > r_in) || r_in < 0)
        throw std::invalid_argument("annulus requires 0 <= r_in < r_out");
    BinaryMask mask(width, height);
    for (int v = 0; v < height; ++v) {
        const double fv = centered_freq(v, height);
        for (int u = 0; u < width; ++u) {
            const double fu = centered_freq(u, width);
            const double r = std::hypot(fu, fv);
            mask.at(v, u) = (r >= r_in && r < r_out) ? 1 : 0;
        }
    }
    return mask;
}

/// Mean spectral magnitude over rings of constant integer frequency radius.
/// Bin b holds the mean |F| over bins with ⌊√(fu²+fv²)⌋ = b, for
/// b = first_radius .. first_radius + values.size() − 1.
struct RadialProfile {
    int first_radius = 0;
    std::vector<double> values;
    std::vector<std::size_t> counts;
};

inline RadialProfile radial_profile(const Spectrum& spec) {
    const int max_bin = std::min(spec.width, spec.height) / 2;
    RadialProfile p;
    p.values.assign(max_bin + 1, 0.0);
    p.counts.assign(max_bin + 1, 0);
    for (int v = 0; v < spec.height; ++v) {
        const double fv = centered_freq(v, spec.height);
        for (int u = 0; u < spec.width; ++u) {
            const double fu = centered_freq(u, spec.width);
            const int bin = static_cast<int>(std::hypot(fu, fv));
            if (bin > max_bin) continue;
            p.values[bin] += std::abs(spec.at(v, u));
            p.counts[bin] += 1;
        }
    }
    for (int b = 0; b <= max_bin; ++b)
        if (p.counts[b] > 0) p.values[b] /= static_cast<double>(p.counts[b]);
    return p;
}

/// Drops the DC bin, keeping the remaining bins' radii intact.
inline RadialProfile drop_dc(const RadialProfile& p) {
    if (p.values.empty()) return p;
    RadialProfile out;
    out.first_radius = p.first_radius + 1;
    out.values.assign(p.values.begin() + 1, p.values.end());
    out.counts.assign(p.counts.begin() + 1, p.counts.end());
    return out;
}

struct ProfileStats {
    double mean = 0.0;
    double stddev = 0.0;
    double com = 0.0;  // center of mass in radius bins
};

/// Mean and population standard deviation of the profile values, plus the
/// profile's center of mass com = Σ r·p(r) / Σ p(r) (0 when Σ p(r) = 0).
inline ProfileStats profile_stats(const RadialProfile& p) {
    if (p.values.empty()) throw std::invalid_argument("profile is empty");
    const double n = static_cast<double>(p.values.size());
    ProfileStats st;
    double mass = 0.0, moment = 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        st.mean += p.values[i];
        mass += p.values[i];
        moment += (p.first_radius + static_cast<double>(i)) * p.values[i];
    }
    st.mean /= n;
    double var = 0.0;
    for (double v : p.values) var += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(var / n);
    st.com = mass > 0.0 ? moment / mass : 0.0;
    return st;
}

} // namespace crystalseg
