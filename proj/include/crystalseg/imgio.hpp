#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include <json.hpp>

#include "crystalseg/core.hpp"
#include "crystalseg/util.hpp"

// File formats:
//   .pgm          binary PGM (P5), maxval 255 or 65535, 16-bit big-endian
//   .png          grayscale PNG, 8 or 16 bit
//   anything else raw float32, little-endian row-major, with a JSON sidecar
//                 at <path>.json holding {"width", "height", "pixel_size_nm"?}
// Integer samples are loaded as-is (0..maxval); nothing is rescaled at load.

namespace crystalseg {

namespace detail {

struct FileCloser {
    std::FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

inline std::string lower_ext(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("missing file: " + path);
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return data;
}

// --- PGM (P5) ---

inline int pgm_next_token(const std::vector<unsigned char>& d, std::size_t& pos,
                          const std::string& path) {
    for (;;) {
        while (pos < d.size() && std::isspace(d[pos])) ++pos;
        if (pos < d.size() && d[pos] == '#') {
            while (pos < d.size() && d[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= d.size() || !std::isdigit(d[pos]))
        throw data_error("malformed header: " + path);
    std::uint64_t v = 0;
    while (pos < d.size() && std::isdigit(d[pos])) {
        v = v * 10 + (d[pos] - '0');
        if (v > 1000000000ull) throw data_error("dimension overflow: " + path);
        ++pos;
    }
    return static_cast<int>(v);
}

inline GrayImage load_pgm(const std::vector<unsigned char>& d, const std::string& path) {
    std::size_t pos = 2;  // past "P5"
    int w = pgm_next_token(d, pos, path);
    int h = pgm_next_token(d, pos, path);
    int maxval = pgm_next_token(d, pos, path);
    if (maxval < 1 || maxval > 65535) throw data_error("malformed header: " + path);
    if (pos >= d.size() || !std::isspace(d[pos]))
        throw data_error("malformed header: " + path);
    ++pos;  // single whitespace separates header from payload
    GrayImage img(w, h);
    const std::size_t n = img.size();
    if (maxval < 256) {
        if (d.size() - pos < n) throw data_error("truncated payload: " + path);
        for (std::size_t i = 0; i < n; ++i) img.pixels[i] = d[pos + i];
    } else {
        if (d.size() - pos < 2 * n) throw data_error("truncated payload: " + path);
        for (std::size_t i = 0; i < n; ++i)
            img.pixels[i] = (d[pos + 2 * i] << 8) | d[pos + 2 * i + 1];  // big-endian
    }
    return img;
}

inline void save_pgm(const GrayImage& img, const std::string& path, int maxval) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("unwritable path: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
    auto quantize = [maxval](double v) {
        long long q = std::llround(v);
        return static_cast<int>(std::clamp<long long>(q, 0, maxval));
    };
    if (maxval < 256) {
        for (double v : img.pixels) out.put(static_cast<char>(quantize(v)));
    } else {
        for (double v : img.pixels) {
            int q = quantize(v);
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    if (!out) throw io_error("unwritable path: " + path);
}

// --- PNG ---

inline GrayImage load_png(const std::string& path) {
    FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.fp) throw io_error("missing file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("libpng init failed");
    }

    GrayImage img;
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> raster;
    std::string error;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw data_error(error.empty() ? "malformed PNG: " + path : error);
    }

    png_init_io(png, file.fp);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        error = "non-grayscale input: " + path;
        longjmp(png_jmpbuf(png), 1);
    }
    int depth = png_get_bit_depth(png, info);
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    GrayImage::check_dims(w, h);
    const std::size_t stride = png_get_rowbytes(png, info);
    raster.resize(stride * h);
    row_ptrs.resize(h);
    for (int r = 0; r < h; ++r) row_ptrs[r] = raster.data() + stride * r;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img = GrayImage(w, h);
    for (int r = 0; r < h; ++r) {
        const unsigned char* row = raster.data() + stride * static_cast<std::size_t>(r);
        for (int c = 0; c < w; ++c) {
            img.at(r, c) = depth == 8
                               ? static_cast<double>(row[c])
                               : static_cast<double>((row[2 * c] << 8) | row[2 * c + 1]);
        }
    }
    return img;
}

inline void save_png(const GrayImage& img, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("PNG bit depth must be 8 or 16");
    FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.fp) throw io_error("unwritable path: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw io_error("libpng init failed");
    }

    const int maxval = (1 << bit_depth) - 1;
    const std::size_t stride = static_cast<std::size_t>(img.width) * (bit_depth / 8);
    std::vector<unsigned char> raster(stride * img.height);
    for (int r = 0; r < img.height; ++r) {
        unsigned char* row = raster.data() + stride * static_cast<std::size_t>(r);
        for (int c = 0; c < img.width; ++c) {
            long long q = std::llround(img.at(r, c));
            int v = static_cast<int>(std::clamp<long long>(q, 0, maxval));
            if (bit_depth == 8) {
                row[c] = static_cast<unsigned char>(v);
            } else {
                row[2 * c] = static_cast<unsigned char>(v >> 8);
                row[2 * c + 1] = static_cast<unsigned char>(v & 0xff);
            }
        }
    }
    std::vector<png_bytep> row_ptrs(img.height);
    for (int r = 0; r < img.height; ++r) row_ptrs[r] = raster.data() + stride * r;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("PNG write failed: " + path);
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, img.width, img.height, bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// --- raw float32 + JSON sidecar ---

inline GrayImage load_raw(const std::string& path) {
    const std::string sidecar = path + ".json";
    std::ifstream side(sidecar);
    if (!side) throw io_error("missing sidecar: " + sidecar);
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed sidecar " + sidecar + ": " + e.what());
    }
    if (!j.contains("width") || !j.contains("height"))
        throw data_error("malformed header: sidecar lacks width/height: " + sidecar);
    const int w = j["width"].get<int>();
    const int h = j["height"].get<int>();
    GrayImage img(w, h);
    if (j.contains("pixel_size_nm") && !j["pixel_size_nm"].is_null())
        img.pixel_size_nm = j["pixel_size_nm"].get<double>();

    auto data = read_file(path);
    if (data.size() != img.size() * 4)
        throw data_error("payload size does not match sidecar dimensions: " + path);
    for (std::size_t i = 0; i < img.size(); ++i) {
        float f;
        std::memcpy(&f, data.data() + 4 * i, 4);  // little-endian host assumed
        if (!std::isfinite(f)) throw data_error("non-finite sample in " + path);
        img.pixels[i] = f;
    }
    return img;
}

inline void save_raw(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("unwritable path: " + path);
    for (double v : img.pixels) {
        float f = static_cast<float>(v);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.write(buf, 4);
    }
    if (!out) throw io_error("unwritable path: " + path);

    nlohmann::json j;
    j["width"] = img.width;
    j["height"] = img.height;
    if (img.pixel_size_nm) j["pixel_size_nm"] = *img.pixel_size_nm;
    std::ofstream side(path + ".json", std::ios::binary);
    if (!side) throw io_error("unwritable path: " + path + ".json");
    side << j.dump() << "\n";
}

} // namespace detail

/// Loads a grayscale image, dispatching on file content (PGM/PNG magic) and
/// falling back to raw float32 when a JSON sidecar is present.
inline GrayImage load_image(const std::string& path) {
    auto data = detail::read_file(path);
    if (data.size() >= 2 && data[0] == 'P' && data[1] == '5')
        return detail::load_pgm(data, path);
    if (data.size() >= 2 && data[0] == 'P' && (data[1] == '6' || data[1] == '3'))
        throw data_error("non-grayscale input: " + path);
    static const unsigned char png_sig[4] = {0x89, 'P', 'N', 'G'};
    if (data.size() >= 4 && std::memcmp(data.data(), png_sig, 4) == 0)
        return detail::load_png(path);
    // Raw float32 files carry no magic; route by sidecar presence, or by the
    // conventional extension so a missing sidecar is reported as such.
    if (std::filesystem::exists(path + ".json") || detail::lower_ext(path) == ".f32")
        return detail::load_raw(path);
    throw data_error("malformed header: unrecognized format: " + path);
}

/// Saves by extension: .pgm / .png quantize to integers (clamped, rounded,
/// bit_depth 8 or 16); any other extension writes raw float32 plus sidecar.
inline void save_image(const GrayImage& img, const std::string& path, int bit_depth = 16) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".pgm") {
        detail::save_pgm(img, path, (1 << bit_depth) - 1);
    } else if (ext == ".png") {
        detail::save_png(img, path, bit_depth);
    } else {
        detail::save_raw(img, path);
    }
}

/// Writes a mask as an 8-bit grayscale file, 0 = background, 255 = particle.
inline void save_mask(const BinaryMask& mask, const std::string& path) {
    GrayImage img(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.bits[i] ? 255.0 : 0.0;
    const std::string ext = detail::lower_ext(path);
    if (ext != ".pgm" && ext != ".png")
        throw std::invalid_argument("mask files must be .pgm or .png: " + path);
    save_image(img, path, 8);
}

/// Any nonzero sample counts as particle, so 0/1 and 0/255 encodings both load.
inline BinaryMask load_mask(const std::string& path) {
    GrayImage img = load_image(path);
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) mask.bits[i] = img.pixels[i] != 0.0 ? 1 : 0;
    return mask;
}

/// Integer formats map sample/maxval to [0,1]; raw float is clamped to [0,1]
/// (out_clamped reports whether clamping happened so callers can warn).
inline ProbMap load_probmap(const std::string& path, bool* out_clamped = nullptr) {
    if (out_clamped) *out_clamped = false;
    auto data = detail::read_file(path);
    GrayImage img;
    double scale = 1.0;
    if (data.size() >= 2 && data[0] == 'P' && data[1] == '5') {
        std::size_t pos = 2;
        std::size_t probe = pos;
        detail::pgm_next_token(data, probe, path);
        detail::pgm_next_token(data, probe, path);
        int maxval = detail::pgm_next_token(data, probe, path);
        img = detail::load_pgm(data, path);
        scale = 1.0 / maxval;
    } else {
        static const unsigned char png_sig[4] = {0x89, 'P', 'N', 'G'};
        if (data.size() >= 4 && std::memcmp(data.data(), png_sig, 4) == 0) {
            img = detail::load_png(path);
            double maxv = 0;
            for (double v : img.pixels) maxv = std::max(maxv, v);
            scale = maxv > 255.0 ? 1.0 / 65535.0 : 1.0 / 255.0;
        } else {
            img = load_image(path);  // raw float route
        }
    }
    ProbMap prob(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img.pixels[i] * scale;
        if (v < 0.0 || v > 1.0) {
            if (out_clamped) *out_clamped = true;
            v = std::clamp(v, 0.0, 1.0);
        }
        prob.probs[i] = v;
    }
    return prob;
}

/// One tile cut from a larger image, with its grid position.
struct Tile {
    GrayImage image;
    int row = 0;
    int col = 0;
};

/// Offsets of ⌈size/tile⌉ tiles along one axis. Tiles are non-overlapping
/// except that the last one is anchored to the image edge when size is not a
/// multiple of tile, so no pixels are ever discarded.
inline std::vector<int> tile_offsets(int size, int tile) {
    const int n = (size + tile - 1) / tile;
    std::vector<int> offsets(n);
    for (int i = 0; i < n; ++i) offsets[i] = std::min(i * tile, size - tile);
    return offsets;
}

inline std::vector<Tile> slice_tiles(const GrayImage& image, int tile = 512) {
    if (tile < 1) throw std::invalid_argument("tile size must be positive");
    if (image.width < tile || image.height < tile)
        throw data_error("image smaller than tile");
    const auto rows = tile_offsets(image.height, tile);
    const auto cols = tile_offsets(image.width, tile);
    std::vector<Tile> tiles;
    tiles.reserve(rows.size() * cols.size());
    for (std::size_t tr = 0; tr < rows.size(); ++tr) {
        for (std::size_t tc = 0; tc < cols.size(); ++tc) {
            Tile t;
            t.row = static_cast<int>(tr);
            t.col = static_cast<int>(tc);
            t.image = GrayImage(tile, tile);
            t.image.pixel_size_nm = image.pixel_size_nm;
            for (int r = 0; r < tile; ++r)
                for (int c = 0; c < tile; ++c)
                    t.image.at(r, c) = image.at(rows[tr] + r, cols[tc] + c);
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

/// Same grid as slice_tiles, for ground-truth masks.
inline std::vector<BinaryMask> slice_mask_tiles(const BinaryMask& mask, int tile = 512) {
    if (mask.width < tile || mask.height < tile)
        throw data_error("image smaller than tile");
    const auto rows = tile_offsets(mask.height, tile);
    const auto cols = tile_offsets(mask.width, tile);
    std::vector<BinaryMask> tiles;
    for (int off_r : rows) {
        for (int off_c : cols) {
            BinaryMask t(tile, tile);
            for (int r = 0; r < tile; ++r)
                for (int c = 0; c < tile; ++c) t.at(r, c) = mask.at(off_r + r, off_c + c);
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

/// One dataset entry. Optional fields are empty strings / nullopt.
struct ManifestEntry {
    std::string image;
    std::string mask;
    std::string probmap;
    std::string material;
    std::optional<double> pixel_size_nm;
    std::string source;  // original micrograph for tiles
    int tile_row = -1;
    int tile_col = -1;
};

/// A list of images (plus optional ground truth / probability maps). Paths
/// inside the file are relative to the manifest's directory.
struct DatasetManifest {
    std::string base_dir;
    std::vector<ManifestEntry> entries;

    std::string resolve(const std::string& rel) const {
        if (rel.empty() || rel.front() == '/') return rel;
        return (std::filesystem::path(base_dir) / rel).string();
    }
};

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("missing file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed manifest " + path + ": " + e.what());
    }
    if (!j.is_array()) throw data_error("manifest must be a JSON array: " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::vector<std::string> seen;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("image"))
            throw data_error("manifest entry lacks \"image\": " + path);
        ManifestEntry entry;
        entry.image = e["image"].get<std::string>();
        if (e.contains("mask") && !e["mask"].is_null()) entry.mask = e["mask"].get<std::string>();
        if (e.contains("probmap") && !e["probmap"].is_null())
            entry.probmap = e["probmap"].get<std::string>();
        if (e.contains("material") && !e["material"].is_null())
            entry.material = e["material"].get<std::string>();
        if (e.contains("pixel_size_nm") && !e["pixel_size_nm"].is_null())
            entry.pixel_size_nm = e["pixel_size_nm"].get<double>();
        if (e.contains("source")) entry.source = e["source"].get<std::string>();
        if (e.contains("tile_row")) entry.tile_row = e["tile_row"].get<int>();
        if (e.contains("tile_col")) entry.tile_col = e["tile_col"].get<int>();
        if (std::find(seen.begin(), seen.end(), entry.image) != seen.end())
            throw data_error("duplicate image path in manifest: " + entry.image);
        seen.push_back(entry.image);
        m.entries.push_back(std::move(entry));
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json o;
        o["image"] = e.image;
        if (!e.mask.empty()) o["mask"] = e.mask;
        if (!e.probmap.empty()) o["probmap"] = e.probmap;
        if (!e.material.empty()) o["material"] = e.material;
        if (e.pixel_size_nm) o["pixel_size_nm"] = *e.pixel_size_nm;
        if (!e.source.empty()) o["source"] = e.source;
        if (e.tile_row >= 0) o["tile_row"] = e.tile_row;
        if (e.tile_col >= 0) o["tile_col"] = e.tile_col;
        j.push_back(std::move(o));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("unwritable path: " + path);
    out << j.dump(2) << "\n";
}

} // namespace crystalseg
