#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crystalseg {

/// Filesystem and on-disk format failures.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// Violations of a data contract between pipeline stages (dimension or
/// schema mismatches, incompatible model files, degenerate inputs).
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

/// 2D grayscale image. Row-major, double intensities, no implied value range.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;
    std::optional<double> pixel_size_nm;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(check_dims(w, h), fill) {}

    double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::size_t size() const { return pixels.size(); }

    static std::size_t check_dims(int w, int h) {
        if (w < 1 || h < 1)
            throw std::invalid_argument("image dimensions must be positive");
        if (static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h) > (1ull << 30))
            throw io_error("dimension overflow");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }

    /// Throws if the pixel buffer does not match the header or holds NaN/Inf.
    void validate() const {
        if (pixels.size() != check_dims(width, height))
            throw data_error("pixel buffer does not match image dimensions");
        for (double v : pixels)
            if (!std::isfinite(v)) throw data_error("non-finite intensity");
    }
};

/// Per-pixel class decision, 1 = particle, 0 = background.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), bits(GrayImage::check_dims(w, h), fill) {}

    std::uint8_t& at(int row, int col) { return bits[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col]; }
    std::size_t size() const { return bits.size(); }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += (b != 0);
        return n;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Per-pixel particle-class probability in [0,1].
struct ProbMap {
    int width = 0;
    int height = 0;
    std::vector<double> probs;

    ProbMap() = default;
    ProbMap(int w, int h, double fill = 0.0)
        : width(w), height(h), probs(GrayImage::check_dims(w, h), fill) {}

    std::size_t size() const { return probs.size(); }
};

/// splitmix64 generator. The exact recurrence is part of the model contract:
/// two builds of this library must draw identical streams so that training
/// with the same seed yields bit-identical forests.
struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, n). Modulo reduction, kept for reproducibility.
    std::uint64_t bounded(std::uint64_t n) { return next() % n; }

    /// Uniform double in [0, 1), 53 significant bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller. One fresh pair per call.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }
};

} // namespace crystalseg
