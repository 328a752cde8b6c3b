#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "crystalseg/core.hpp"
#include "crystalseg/forest.hpp"
#include "crystalseg/regions.hpp"

// Self-contained test fixture: tiles of fringe-filled elliptical particles on
// a noisy background, with exact ground truth. Three particle kinds map onto
// the classifier's labels:
//   - plain lattice fringes                          → NoStackingFault
//   - fringes with a π phase flip across a line
//     through the particle center (offset fringes)   → StackingFault
//   - contrast lift without fringes                  → Misoriented
// Everything is a pure function of the seed.

namespace crystalseg {

struct SynthParams {
    int n_tiles = 20;
    int size = 256;
    std::uint64_t seed = 1;
    int min_particles = 2;
    int max_particles = 4;
    double fringe_period = 6.0;      // pixels per fringe cycle
    double fringe_amplitude = 0.22;  // intensity amplitude of fringes
    double contrast_lift = 0.18;     // particle brightness above background
    double noise_sigma = 0.04;       // Gaussian noise std
    double background = 0.35;        // background intensity
    double semi_major_min = 18.0;    // ellipse semi-major axis range, pixels
    double semi_major_max = 26.0;
    double aspect_min = 0.85;        // semi-minor / semi-major
    bool with_faults = true;
    bool with_plain = true;
    bool with_unfringed = true;
};

struct SynthParticle {
    double center_row = 0.0, center_col = 0.0;
    double semi_major = 0.0, semi_minor = 0.0;
    double orientation = 0.0;   // ellipse axis angle
    double fringe_angle = 0.0;  // fringe wavevector direction
    double phase = 0.0;
    ClassLabel label = ClassLabel::NoStackingFault;
};

struct SynthTile {
    GrayImage image;
    BinaryMask truth;       // union of particle pixels
    LabelImage particles;   // 0 = background, i+1 = particle index i
    std::vector<SynthParticle> list;
};

/// Per-tile seeds, drawn serially from the master stream so tiles can be
/// generated in parallel without changing the dataset.
inline std::vector<std::uint64_t> synth_tile_seeds(std::uint64_t seed, int n_tiles) {
    SplitMix64 master{seed};
    std::vector<std::uint64_t> seeds(n_tiles);
    for (auto& s : seeds) s = master.next();
    return seeds;
}

/// Classes enabled by the parameter toggles, in fixed label order.
inline std::vector<ClassLabel> synth_enabled_classes(const SynthParams& p) {
    std::vector<ClassLabel> enabled;
    if (p.with_faults) enabled.push_back(ClassLabel::StackingFault);
    if (p.with_plain) enabled.push_back(ClassLabel::NoStackingFault);
    if (p.with_unfringed) enabled.push_back(ClassLabel::Misoriented);
    if (enabled.empty()) throw std::invalid_argument("no particle classes enabled");
    return enabled;
}

inline SynthTile synth_tile(const SynthParams& p, std::uint64_t tile_seed, int tile_index = 0) {
    if (p.size < 1) throw std::invalid_argument("tile size must be positive");
    const auto enabled = synth_enabled_classes(p);
    SplitMix64 rng{tile_seed};
    SynthTile tile;
    tile.image = GrayImage(p.size, p.size, p.background);
    tile.truth = BinaryMask(p.size, p.size);
    tile.particles.width = p.size;
    tile.particles.height = p.size;
    tile.particles.labels.assign(tile.image.size(), 0);

    const int span = p.max_particles - p.min_particles + 1;
    const int want = p.min_particles + static_cast<int>(rng.bounded(span));
    // Cycle classes with a per-tile offset so every tile count stays balanced
    // across the dataset.
    const int class_offset = tile_index;

    for (int k = 0; k < want; ++k) {
        SynthParticle part;
        part.label = enabled[(class_offset + k) % enabled.size()];
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            part.semi_major =
                p.semi_major_min + rng.uniform() * (p.semi_major_max - p.semi_major_min);
            part.semi_minor = part.semi_major * (p.aspect_min + rng.uniform() * (1.0 - p.aspect_min));
            const double margin = part.semi_major + 4.0;
            if (2.0 * margin >= p.size) break;  // tile too small for this particle
            part.center_row = margin + rng.uniform() * (p.size - 2.0 * margin);
            part.center_col = margin + rng.uniform() * (p.size - 2.0 * margin);
            part.orientation = rng.uniform() * std::numbers::pi;
            part.fringe_angle = rng.uniform() * std::numbers::pi;
            part.phase = rng.uniform() * 2.0 * std::numbers::pi;
            placed = true;
            for (const SynthParticle& other : tile.list) {
                const double d = std::hypot(part.center_row - other.center_row,
                                            part.center_col - other.center_col);
                if (d < part.semi_major + other.semi_major + 6.0) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) continue;

        const int id = static_cast<int>(tile.list.size()) + 1;
        const double cos_o = std::cos(part.orientation), sin_o = std::sin(part.orientation);
        const double cos_f = std::cos(part.fringe_angle), sin_f = std::sin(part.fringe_angle);
        const int r0 = std::max(0, static_cast<int>(part.center_row - part.semi_major - 1));
        const int r1 = std::min(p.size - 1, static_cast<int>(part.center_row + part.semi_major + 1));
        const int c0 = std::max(0, static_cast<int>(part.center_col - part.semi_major - 1));
        const int c1 = std::min(p.size - 1, static_cast<int>(part.center_col + part.semi_major + 1));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double dr = r - part.center_row, dc = c - part.center_col;
                const double u = cos_o * dc + sin_o * dr;
                const double v = -sin_o * dc + cos_o * dr;
                const double eu = u / part.semi_major, ev = v / part.semi_minor;
                if (eu * eu + ev * ev > 1.0) continue;
                double value = p.background + p.contrast_lift;
                if (part.label != ClassLabel::Misoriented) {
                    // Wavevector projection; a fault flips the phase by π on
                    // one side of the line through the center perpendicular
                    // to the wavevector, offsetting the fringes there.
                    const double proj = cos_f * c + sin_f * r;
                    double phase = 2.0 * std::numbers::pi * proj / p.fringe_period + part.phase;
                    if (part.label == ClassLabel::StackingFault && cos_f * dc + sin_f * dr > 0.0)
                        phase += std::numbers::pi;
                    value += p.fringe_amplitude * std::cos(phase);
                }
                tile.image.at(r, c) = value;
                tile.truth.at(r, c) = 1;
                tile.particles.at(r, c) = id;
            }
        }
        tile.list.push_back(part);
    }
    tile.particles.count = static_cast<int>(tile.list.size());

    if (p.noise_sigma > 0.0) {
        for (double& px : tile.image.pixels) px += p.noise_sigma * rng.normal();
    }
    return tile;
}

} // namespace crystalseg
