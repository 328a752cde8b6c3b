#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crystalseg/core.hpp"

namespace crystalseg {

namespace detail {

/// Offsets within Euclidean distance ≤ radius of the center pixel.
inline std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) offs.emplace_back(dr, dc);
    return offs;
}

} // namespace detail

/// Erosion with a disk structuring element. Out-of-bounds neighbors count as
/// set, the adjoint of dilation's empty padding; together these make opening
/// and closing idempotent and correctly ordered (open(m) ⊆ m ⊆ close(m)).
inline BinaryMask binary_erode(const BinaryMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("radius must be >= 0");
    if (radius == 0) return mask;
    const auto offs = detail::disk_offsets(radius);
    BinaryMask out(mask.width, mask.height);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            std::uint8_t hit = 1;
            for (const auto& [dr, dc] : offs) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= mask.height || cc < 0 || cc >= mask.width) continue;
                if (!mask.at(rr, cc)) {
                    hit = 0;
                    break;
                }
            }
            out.at(r, c) = hit;
        }
    }
    return out;
}

/// Dilation with a disk structuring element; out-of-bounds treated as empty.
inline BinaryMask binary_dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("radius must be >= 0");
    if (radius == 0) return mask;
    const auto offs = detail::disk_offsets(radius);
    BinaryMask out(mask.width, mask.height);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            std::uint8_t hit = 0;
            for (const auto& [dr, dc] : offs) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= mask.height || cc < 0 || cc >= mask.width) continue;
                if (mask.at(rr, cc)) {
                    hit = 1;
                    break;
                }
            }
            out.at(r, c) = hit;
        }
    }
    return out;
}

/// Dilation then erosion: fills gaps up to the disk diameter.
inline BinaryMask binary_close(const BinaryMask& mask, int radius) {
    return binary_erode(binary_dilate(mask, radius), radius);
}

/// Erosion then dilation: removes specks smaller than the disk.
inline BinaryMask binary_open(const BinaryMask& mask, int radius) {
    return binary_dilate(binary_erode(mask, radius), radius);
}

struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;  // 0 = background, components numbered 1..count
    int count = 0;

    std::int32_t& at(int row, int col) {
        return labels[static_cast<std::size_t>(row) * width + col];
    }
    std::int32_t at(int row, int col) const {
        return labels[static_cast<std::size_t>(row) * width + col];
    }
};

/// 8-connected components, labeled 1..K in raster order of first encounter.
inline LabelImage connected_components(const BinaryMask& mask) {
    LabelImage out;
    out.width = mask.width;
    out.height = mask.height;
    out.labels.assign(mask.size(), 0);
    std::deque<std::pair<int, int>> queue;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (!mask.at(r, c) || out.at(r, c) != 0) continue;
            const std::int32_t label = ++out.count;
            out.at(r, c) = label;
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                const auto [qr, qc] = queue.front();
                queue.pop_front();
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = qr + dr, cc = qc + dc;
                        if (rr < 0 || rr >= mask.height || cc < 0 || cc >= mask.width) continue;
                        if (!mask.at(rr, cc) || out.at(rr, cc) != 0) continue;
                        out.at(rr, cc) = label;
                        queue.emplace_back(rr, cc);
                    }
                }
            }
        }
    }
    return out;
}

/// One isolated candidate particle. bbox is the tight bound of the set bits;
/// the crops cover the bbox grown by a margin (clamped to the tile), with
/// crop_row/crop_col recording the crop origin in tile coordinates. mask_crop
/// contains only this region's pixels, so area equals its set-bit count.
struct Region {
    int id = 0;
    int bbox_min_row = 0, bbox_min_col = 0, bbox_max_row = 0, bbox_max_col = 0;
    int crop_row = 0, crop_col = 0;
    GrayImage image_crop;
    BinaryMask mask_crop;
    std::size_t area = 0;
    std::string source;
};

struct RegionFilterReport {
    std::size_t too_small = 0;
    std::size_t too_large = 0;
};

/// Cuts one Region per label whose area lies in [min_area, max_area].
inline std::vector<Region> extract_regions(const LabelImage& labels, const GrayImage& image,
                                           std::size_t min_area = 64,
                                           std::size_t max_area = SIZE_MAX, int margin = 8,
                                           RegionFilterReport* report = nullptr) {
    if (labels.width != image.width || labels.height != image.height)
        throw std::invalid_argument("label image and image dimensions differ");
    if (min_area < 1 || min_area > max_area)
        throw std::invalid_argument("need 0 < min_area <= max_area");
    if (margin < 0) throw std::invalid_argument("margin must be >= 0");

    struct Extent {
        std::size_t area = 0;
        int min_row = INT_MAX, min_col = INT_MAX, max_row = -1, max_col = -1;
    };
    std::vector<Extent> extents(labels.count + 1);
    for (int r = 0; r < labels.height; ++r) {
        for (int c = 0; c < labels.width; ++c) {
            const std::int32_t l = labels.at(r, c);
            if (l == 0) continue;
            Extent& e = extents[l];
            e.area += 1;
            e.min_row = std::min(e.min_row, r);
            e.min_col = std::min(e.min_col, c);
            e.max_row = std::max(e.max_row, r);
            e.max_col = std::max(e.max_col, c);
        }
    }

    std::vector<Region> regions;
    for (int l = 1; l <= labels.count; ++l) {
        const Extent& e = extents[l];
        if (e.area < min_area) {
            if (report) report->too_small += 1;
            continue;
        }
        if (e.area > max_area) {
            if (report) report->too_large += 1;
            continue;
        }
        Region reg;
        reg.id = l;
        reg.bbox_min_row = e.min_row;
        reg.bbox_min_col = e.min_col;
        reg.bbox_max_row = e.max_row;
        reg.bbox_max_col = e.max_col;
        reg.area = e.area;
        reg.crop_row = std::max(0, e.min_row - margin);
        reg.crop_col = std::max(0, e.min_col - margin);
        const int crop_h = std::min(labels.height - 1, e.max_row + margin) - reg.crop_row + 1;
        const int crop_w = std::min(labels.width - 1, e.max_col + margin) - reg.crop_col + 1;
        reg.image_crop = GrayImage(crop_w, crop_h);
        reg.image_crop.pixel_size_nm = image.pixel_size_nm;
        reg.mask_crop = BinaryMask(crop_w, crop_h);
        for (int r = 0; r < crop_h; ++r) {
            for (int c = 0; c < crop_w; ++c) {
                const int sr = reg.crop_row + r, sc = reg.crop_col + c;
                reg.image_crop.at(r, c) = image.at(sr, sc);
                reg.mask_crop.at(r, c) = labels.at(sr, sc) == l ? 1 : 0;
            }
        }
        regions.push_back(std::move(reg));
    }
    return regions;
}

/// Size and shape statistics of one region. Axes come from the eigenvalues of
/// the second-central-moment matrix of the set pixels (4·√λ); eccentricity is
/// √(1−(minor/major)²), 0 for degenerate (point-like) regions. A single-row
/// or single-column region has minor axis 0 and eccentricity exactly 1.
struct RegionProps {
    std::size_t area_px = 0;
    std::optional<double> area_nm2;
    double equivalent_diameter = 0.0;  // pixels
    double centroid_row = 0.0, centroid_col = 0.0;  // tile coordinates
    double major_axis = 0.0, minor_axis = 0.0;  // pixels
    double eccentricity = 0.0;
};

inline RegionProps region_props(const Region& region,
                                std::optional<double> pixel_size_nm = std::nullopt) {
    if (region.area == 0) throw std::invalid_argument("region has no pixels");
    RegionProps props;
    props.area_px = region.area;
    if (pixel_size_nm) props.area_nm2 = static_cast<double>(region.area) * *pixel_size_nm * *pixel_size_nm;
    props.equivalent_diameter = std::sqrt(4.0 * static_cast<double>(region.area) / std::numbers::pi);

    double sum_r = 0.0, sum_c = 0.0;
    for (int r = 0; r < region.mask_crop.height; ++r)
        for (int c = 0; c < region.mask_crop.width; ++c)
            if (region.mask_crop.at(r, c)) {
                sum_r += r;
                sum_c += c;
            }
    const double n = static_cast<double>(region.area);
    const double mean_r = sum_r / n, mean_c = sum_c / n;
    props.centroid_row = region.crop_row + mean_r;
    props.centroid_col = region.crop_col + mean_c;

    double mrr = 0.0, mcc = 0.0, mrc = 0.0;
    for (int r = 0; r < region.mask_crop.height; ++r)
        for (int c = 0; c < region.mask_crop.width; ++c)
            if (region.mask_crop.at(r, c)) {
                const double dr = r - mean_r, dc = c - mean_c;
                mrr += dr * dr;
                mcc += dc * dc;
                mrc += dr * dc;
            }
    mrr /= n;
    mcc /= n;
    mrc /= n;
    const double trace = mrr + mcc;
    const double det = mrr * mcc - mrc * mrc;
    const double disc = std::sqrt(std::max(0.0, trace * trace / 4.0 - det));
    const double l1 = std::max(0.0, trace / 2.0 + disc);
    const double l2 = std::max(0.0, trace / 2.0 - disc);
    props.major_axis = 4.0 * std::sqrt(l1);
    props.minor_axis = 4.0 * std::sqrt(l2);
    props.eccentricity =
        props.major_axis > 0.0
            ? std::sqrt(std::max(0.0, 1.0 - (props.minor_axis / props.major_axis) *
                                                (props.minor_axis / props.major_axis)))
            : 0.0;
    return props;
}

} // namespace crystalseg
