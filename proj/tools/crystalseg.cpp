#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crystalseg/crystalseg.hpp"

namespace fs = std::filesystem;
using namespace crystalseg;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config: a flat JSON object of defaults; command-line flags override it.

json load_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0) path = arg.substr(9);
    }
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw io_error("missing config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("malformed config " + path + ": " + std::string(e.what()));
    }
    if (!j.is_object()) throw data_error("config must be a JSON object: " + path);
    return j;
}

struct Cfg {
    json values;

    double num(const std::string& key, double dflt) const {
        return values.contains(key) ? values.at(key).get<double>() : dflt;
    }
    int integer(const std::string& key, int dflt) const {
        return values.contains(key) ? values.at(key).get<int>() : dflt;
    }
    std::uint64_t uint64(const std::string& key, std::uint64_t dflt) const {
        return values.contains(key) ? values.at(key).get<std::uint64_t>() : dflt;
    }
    std::string str(const std::string& key, const std::string& dflt) const {
        return values.contains(key) ? values.at(key).get<std::string>() : dflt;
    }
};

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string tile_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "tile_%04d", index);
    return buf;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const std::string& tok : split(s, ','))
        if (!tok.empty()) out.push_back(parse_double(tok));
    return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthCli {
    std::string out;
    SynthParams params;
    int jobs = 1;
};

int run_synth(const SynthCli& cli) {
    fs::create_directories(fs::path(cli.out) / "tiles");
    fs::create_directories(fs::path(cli.out) / "truth");

    const auto seeds = synth_tile_seeds(cli.params.seed, cli.params.n_tiles);
    std::vector<std::vector<SynthParticle>> particles(cli.params.n_tiles);
    parallel_for(static_cast<std::size_t>(cli.params.n_tiles), cli.jobs, [&](std::size_t i) {
        const SynthTile tile = synth_tile(cli.params, seeds[i], static_cast<int>(i));
        const std::string name = tile_name(static_cast<int>(i));
        save_image(tile.image, (fs::path(cli.out) / "tiles" / (name + ".f32")).string());
        save_mask(tile.truth, (fs::path(cli.out) / "truth" / (name + "_truth.pgm")).string());
        GrayImage ids(tile.particles.width, tile.particles.height);
        for (std::size_t k = 0; k < ids.size(); ++k) ids.pixels[k] = tile.particles.labels[k];
        save_image(ids, (fs::path(cli.out) / "truth" / (name + "_ids.pgm")).string(), 8);
        particles[i] = tile.list;
    });

    CsvTable classes;
    classes.header = {"tile", "particle_id", "class"};
    DatasetManifest manifest;
    for (int i = 0; i < cli.params.n_tiles; ++i) {
        const std::string name = tile_name(i);
        for (std::size_t k = 0; k < particles[i].size(); ++k)
            classes.rows.push_back({name, std::to_string(k + 1),
                                    std::string(class_name(particles[i][k].label))});
        ManifestEntry entry;
        entry.image = "tiles/" + name + ".f32";
        entry.mask = "truth/" + name + "_truth.pgm";
        entry.material = "synthetic";
        manifest.entries.push_back(std::move(entry));
    }
    write_csv(classes, (fs::path(cli.out) / "truth" / "classes.csv").string());
    save_manifest(manifest, (fs::path(cli.out) / "manifest.json").string());
    std::cerr << "synth: wrote " << cli.params.n_tiles << " tiles to " << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessCli {
    std::string manifest;
    std::string out;
    int tile = 512;
    int kernel = 3;
    std::string normalize_per = "tile";  // "tile" | "image"
    int jobs = 1;
};

int run_preprocess(const PreprocessCli& cli) {
    const DatasetManifest input = load_manifest(cli.manifest);
    fs::create_directories(cli.out);
    if (input.entries.empty()) {
        std::cerr << "preprocess: warning: no entries in " << cli.manifest << "\n";
        save_manifest(DatasetManifest{}, (fs::path(cli.out) / "manifest.json").string());
        return 0;
    }
    if (cli.normalize_per != "tile" && cli.normalize_per != "image")
        throw std::invalid_argument("--normalize-per must be 'tile' or 'image'");

    std::vector<std::vector<ManifestEntry>> produced(input.entries.size());
    parallel_for(input.entries.size(), cli.jobs, [&](std::size_t i) {
        const ManifestEntry& entry = input.entries[i];
        GrayImage image = load_image(input.resolve(entry.image));
        image = median_filter(image, cli.kernel);
        if (cli.normalize_per == "image") image = normalize(image);
        if (entry.pixel_size_nm) image.pixel_size_nm = entry.pixel_size_nm;

        std::optional<BinaryMask> mask;
        if (!entry.mask.empty()) {
            mask = load_mask(input.resolve(entry.mask));
            if (mask->width != image.width || mask->height != image.height)
                throw data_error("mask dimensions differ from image: " + entry.mask);
        }

        const auto tiles = slice_tiles(image, cli.tile);
        const auto mask_tiles =
            mask ? slice_mask_tiles(*mask, cli.tile) : std::vector<BinaryMask>{};
        const std::string stem = stem_of(entry.image);
        for (std::size_t t = 0; t < tiles.size(); ++t) {
            Tile tile = tiles[t];
            if (cli.normalize_per == "tile") {
                tile.image = normalize(tile.image);
                tile.image.pixel_size_nm = image.pixel_size_nm;
            }
            char suffix[32];
            std::snprintf(suffix, sizeof(suffix), "_r%d_c%d", tile.row, tile.col);
            const std::string name = stem + suffix;
            save_image(tile.image, (fs::path(cli.out) / (name + ".f32")).string());
            ManifestEntry out_entry;
            out_entry.image = name + ".f32";
            out_entry.material = entry.material;
            out_entry.pixel_size_nm = entry.pixel_size_nm;
            out_entry.source = entry.image;
            out_entry.tile_row = tile.row;
            out_entry.tile_col = tile.col;
            if (mask) {
                save_mask(mask_tiles[t], (fs::path(cli.out) / (name + "_truth.pgm")).string());
                out_entry.mask = name + "_truth.pgm";
            }
            produced[i].push_back(std::move(out_entry));
        }
    });

    DatasetManifest out_manifest;
    for (auto& group : produced)
        for (auto& e : group) out_manifest.entries.push_back(std::move(e));
    save_manifest(out_manifest, (fs::path(cli.out) / "manifest.json").string());
    std::cerr << "preprocess: wrote " << out_manifest.entries.size() << " tiles to " << cli.out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentCli {
    std::string manifest;
    std::string out;
    std::string method = "fourier";  // otsu | fourier | probmap
    int bins = 256;
    bool particles_dark = false;
    double r_in = 2.0;
    double r_out = 60.0;
    double sigma = 2.0;
    std::string mode = "keep";  // keep | suppress
    double threshold = 0.3;
    double prob_threshold = 0.5;
    bool optimize = false;
    std::string grid_r_in = "0,10,20,30,40";
    std::string grid_r_out = "10,20,30,40,50,60";
    int jobs = 1;
};

BinaryMask segment_one(const SegmentCli& cli, const GrayImage& image, double r_in, double r_out) {
    if (cli.method == "otsu") return otsu_threshold(image, cli.bins, !cli.particles_dark).mask;
    const AnnulusMode mode =
        cli.mode == "suppress" ? AnnulusMode::suppress : AnnulusMode::keep;
    return fourier_filter_segment(image, r_in, r_out, cli.sigma, mode, cli.threshold);
}

int run_segment(const SegmentCli& cli) {
    if (cli.method != "otsu" && cli.method != "fourier" && cli.method != "probmap")
        throw std::invalid_argument("--method must be otsu, fourier, or probmap");
    if (cli.mode != "keep" && cli.mode != "suppress")
        throw std::invalid_argument("--mode must be keep or suppress");
    const DatasetManifest manifest = load_manifest(cli.manifest);
    fs::create_directories(cli.out);

    double r_in = cli.r_in, r_out = cli.r_out;
    if (cli.optimize && cli.method == "fourier") {
        for (const auto& entry : manifest.entries)
            if (entry.mask.empty())
                throw data_error("--optimize requires ground-truth masks in the manifest");
        std::vector<GrayImage> images(manifest.entries.size());
        std::vector<BinaryMask> truths(manifest.entries.size());
        parallel_for(manifest.entries.size(), cli.jobs, [&](std::size_t i) {
            images[i] = load_image(manifest.resolve(manifest.entries[i].image));
            truths[i] = load_mask(manifest.resolve(manifest.entries[i].mask));
        });
        const auto grid_in = parse_double_list(cli.grid_r_in);
        const auto grid_out = parse_double_list(cli.grid_r_out);
        double best_mean = -1.0;
        for (double gi : grid_in) {
            for (double go : grid_out) {
                if (go <= gi) continue;
                std::vector<double> scores(images.size());
                parallel_for(images.size(), cli.jobs, [&](std::size_t i) {
                    const BinaryMask mask = segment_one(cli, images[i], gi, go);
                    scores[i] = dice(mask_counts(mask, truths[i]));
                });
                double mean = 0.0;
                for (double s : scores) mean += s;
                mean /= static_cast<double>(scores.size());
                if (mean > best_mean) {
                    best_mean = mean;
                    r_in = gi;
                    r_out = go;
                }
            }
        }
        std::cerr << "segment: optimized annulus r_in=" << format_double(r_in)
                  << " r_out=" << format_double(r_out)
                  << " (mean dice " << format_double(best_mean) << ")\n";
    }

    std::atomic<bool> any_clamped{false};
    parallel_for(manifest.entries.size(), cli.jobs, [&](std::size_t i) {
        const ManifestEntry& entry = manifest.entries[i];
        BinaryMask mask;
        if (cli.method == "probmap") {
            if (entry.probmap.empty())
                throw data_error("probmap method requires probability maps in the manifest: " +
                                 entry.image);
            bool clamped = false;
            const ProbMap prob = load_probmap(manifest.resolve(entry.probmap), &clamped);
            if (clamped) any_clamped.store(true, std::memory_order_relaxed);
            mask = threshold_probmap(prob, cli.prob_threshold);
        } else {
            const GrayImage image = load_image(manifest.resolve(entry.image));
            mask = segment_one(cli, image, r_in, r_out);
        }
        const std::string name = stem_of(entry.image) + "_mask.pgm";
        save_mask(mask, (fs::path(cli.out) / name).string());
    });
    if (any_clamped)
        std::cerr << "segment: warning: probability values outside [0,1] were clamped\n";
    std::cerr << "segment: wrote " << manifest.entries.size() << " masks to " << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// regions

struct RegionsCli {
    std::string manifest;
    std::string masks_dir;
    std::string out;
    int close_radius = 2;
    int open_radius = 2;
    std::size_t min_area = 64;
    double max_area_fraction = 0.25;
    int margin = 8;
    int jobs = 1;
};

int run_regions(const RegionsCli& cli) {
    const DatasetManifest manifest = load_manifest(cli.manifest);
    fs::create_directories(fs::path(cli.out) / "crops");

    struct TileRegions {
        std::vector<Region> regions;
        std::vector<RegionProps> props;
        RegionFilterReport report;
        std::optional<double> pixel_size;
    };
    std::vector<TileRegions> per_tile(manifest.entries.size());

    parallel_for(manifest.entries.size(), cli.jobs, [&](std::size_t i) {
        const ManifestEntry& entry = manifest.entries[i];
        const GrayImage image = load_image(manifest.resolve(entry.image));
        const std::string mask_path =
            (fs::path(cli.masks_dir) / (stem_of(entry.image) + "_mask.pgm")).string();
        BinaryMask mask = load_mask(mask_path);
        if (mask.width != image.width || mask.height != image.height)
            throw data_error("mask dimensions differ from image: " + mask_path);
        if (cli.close_radius > 0) mask = binary_close(mask, cli.close_radius);
        if (cli.open_radius > 0) mask = binary_open(mask, cli.open_radius);
        const LabelImage labels = connected_components(mask);
        const auto max_area = static_cast<std::size_t>(
            cli.max_area_fraction * static_cast<double>(image.size()));
        TileRegions& slot = per_tile[i];
        slot.pixel_size = entry.pixel_size_nm ? entry.pixel_size_nm : image.pixel_size_nm;
        slot.regions = extract_regions(labels, image, cli.min_area, max_area, cli.margin,
                                       &slot.report);
        const std::string stem = stem_of(entry.image);
        for (Region& region : slot.regions) {
            region.source = stem;
            slot.props.push_back(region_props(region, slot.pixel_size));
            const std::string base =
                (fs::path(cli.out) / "crops" / (stem + "_r" + std::to_string(region.id))).string();
            save_image(region.image_crop, base + ".f32");
            save_mask(region.mask_crop, base + "_mask.pgm");
        }
    });

    CsvTable table;
    table.header = {"region_id", "tile", "component", "bbox_min_row", "bbox_min_col",
                    "bbox_max_row", "bbox_max_col", "crop_row", "crop_col", "area_px",
                    "area_nm2", "equivalent_diameter_px", "centroid_row", "centroid_col",
                    "major_axis_px", "minor_axis_px", "eccentricity", "crop_image", "crop_mask"};
    std::size_t next_id = 1;
    RegionFilterReport totals;
    for (const TileRegions& slot : per_tile) {
        totals.too_small += slot.report.too_small;
        totals.too_large += slot.report.too_large;
        for (std::size_t k = 0; k < slot.regions.size(); ++k) {
            const Region& region = slot.regions[k];
            const RegionProps& props = slot.props[k];
            const std::string crop_base = "crops/" + region.source + "_r" +
                                          std::to_string(region.id);
            table.rows.push_back(
                {std::to_string(next_id++), region.source, std::to_string(region.id),
                 std::to_string(region.bbox_min_row), std::to_string(region.bbox_min_col),
                 std::to_string(region.bbox_max_row), std::to_string(region.bbox_max_col),
                 std::to_string(region.crop_row), std::to_string(region.crop_col),
                 std::to_string(region.area),
                 format_double(props.area_nm2 ? *props.area_nm2
                                              : std::numeric_limits<double>::quiet_NaN()),
                 format_double(props.equivalent_diameter), format_double(props.centroid_row),
                 format_double(props.centroid_col), format_double(props.major_axis),
                 format_double(props.minor_axis), format_double(props.eccentricity),
                 crop_base + ".f32", crop_base + "_mask.pgm"});
        }
    }
    write_csv(table, (fs::path(cli.out) / "regions.csv").string());
    std::cerr << "regions: " << table.rows.size() << " regions kept, " << totals.too_small
              << " too small, " << totals.too_large << " too large\n";
    return 0;
}

// ---------------------------------------------------------------------------
// features

struct FeaturesCli {
    std::string regions_csv;
    std::string out;
    int pad_to = 128;
    bool include_dc = false;
    std::string truth_ids_dir;
    std::string truth_classes;
    double overlap_threshold = 0.5;
    int jobs = 1;
};

int run_features(const FeaturesCli& cli) {
    const CsvTable regions = read_csv(cli.regions_csv);
    const int col_id = regions.require_column("region_id");
    const int col_tile = regions.require_column("tile");
    const int col_crop_row = regions.require_column("crop_row");
    const int col_crop_col = regions.require_column("crop_col");
    const int col_area = regions.require_column("area_px");
    const int col_image = regions.require_column("crop_image");
    const int col_mask = regions.require_column("crop_mask");
    const std::string base_dir = fs::path(cli.regions_csv).parent_path().string();
    auto resolve = [&](const std::string& rel) {
        return (fs::path(base_dir) / rel).string();
    };

    const bool with_labels = !cli.truth_ids_dir.empty();
    std::map<std::pair<std::string, int>, ClassLabel> truth_classes;
    if (with_labels) {
        if (cli.truth_classes.empty())
            throw std::invalid_argument("--truth-ids-dir requires --truth-classes");
        const CsvTable classes = read_csv(cli.truth_classes);
        const int c_tile = classes.require_column("tile");
        const int c_id = classes.require_column("particle_id");
        const int c_class = classes.require_column("class");
        for (const auto& row : classes.rows)
            truth_classes[{row[c_tile], static_cast<int>(parse_int(row[c_id]))}] =
                class_from_name(row[c_class]);
    }

    struct Row {
        Region region;
        FeatureVector fv;
        std::string label;
    };
    std::vector<Row> rows(regions.rows.size());

    // Load the crops first to settle one shared frame size for every region.
    parallel_for(regions.rows.size(), cli.jobs, [&](std::size_t i) {
        const auto& in = regions.rows[i];
        Row& row = rows[i];
        row.region.image_crop = load_image(resolve(in[col_image]));
        row.region.mask_crop = load_mask(resolve(in[col_mask]));
        row.region.area = row.region.mask_crop.count();
        row.region.crop_row = static_cast<int>(parse_int(in[col_crop_row]));
        row.region.crop_col = static_cast<int>(parse_int(in[col_crop_col]));
        if (row.region.area != static_cast<std::size_t>(parse_int(in[col_area])))
            throw data_error("crop mask area does not match regions.csv area_px for region " +
                             in[col_id]);
    });
    int pad = cli.pad_to;
    for (const Row& row : rows)
        pad = std::max(pad, fitted_pad(cli.pad_to, row.region.mask_crop.width,
                                       row.region.mask_crop.height));

    parallel_for(rows.size(), cli.jobs, [&](std::size_t i) {
        Row& row = rows[i];
        row.fv = compute_features(row.region, pad, cli.include_dc);
        if (with_labels) {
            const std::string tile = regions.rows[i][col_tile];
            const GrayImage ids = load_image(
                (fs::path(cli.truth_ids_dir) / (tile + "_ids.pgm")).string());
            std::map<int, std::size_t> overlap;
            const BinaryMask& m = row.region.mask_crop;
            for (int r = 0; r < m.height; ++r)
                for (int c = 0; c < m.width; ++c)
                    if (m.at(r, c)) {
                        const int rr = row.region.crop_row + r, cc = row.region.crop_col + c;
                        if (rr < ids.height && cc < ids.width) {
                            const int id = static_cast<int>(ids.at(rr, cc));
                            if (id > 0) overlap[id] += 1;
                        }
                    }
            int best_id = 0;
            std::size_t best_n = 0;
            for (const auto& [id, n] : overlap)
                if (n > best_n) {
                    best_n = n;
                    best_id = id;
                }
            ClassLabel label = ClassLabel::NoParticle;
            if (best_id > 0 &&
                static_cast<double>(best_n) >=
                    cli.overlap_threshold * static_cast<double>(row.region.area)) {
                const auto it = truth_classes.find({tile, best_id});
                if (it == truth_classes.end())
                    throw data_error("no class recorded for particle " + std::to_string(best_id) +
                                     " in tile " + tile);
                label = it->second;
            }
            row.label = std::string(class_name(label));
        }
    });

    CsvTable out;
    out.header = {"region_id", "tile", "f1", "f2", "f3", "f4", "f5", "pad_to"};
    if (with_labels) out.header.push_back("label");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& in = regions.rows[i];
        std::vector<std::string> fields = {
            in[col_id], in[col_tile], format_double(rows[i].fv.f1),
            format_double(rows[i].fv.f2), format_double(rows[i].fv.f3),
            format_double(rows[i].fv.f4), format_double(rows[i].fv.f5), std::to_string(pad)};
        if (with_labels) fields.push_back(rows[i].label);
        out.rows.push_back(std::move(fields));
    }
    write_csv(out, cli.out);
    std::cerr << "features: wrote " << out.rows.size() << " rows (frame " << pad << ") to "
              << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// rf-train / rf-predict

struct TrainCli {
    std::string features_csv;
    std::string out;
    TrainParams params;
    std::uint64_t seed = 0;
    int jobs = 1;
};

void read_feature_rows(const CsvTable& table, std::vector<std::array<double, 5>>& x,
                       std::vector<int>& pads) {
    const int cols[5] = {table.require_column("f1"), table.require_column("f2"),
                         table.require_column("f3"), table.require_column("f4"),
                         table.require_column("f5")};
    const int col_pad = table.require_column("pad_to");
    for (const auto& row : table.rows) {
        std::array<double, 5> fv;
        for (int k = 0; k < 5; ++k) fv[k] = parse_double(row[cols[k]]);
        x.push_back(fv);
        pads.push_back(static_cast<int>(parse_int(row[col_pad])));
    }
}

int run_train(const TrainCli& cli) {
    const CsvTable table = read_csv(cli.features_csv);
    const int col_label = table.require_column("label");
    std::vector<std::array<double, 5>> x;
    std::vector<int> pads;
    read_feature_rows(table, x, pads);
    std::vector<ClassLabel> y;
    for (const auto& row : table.rows) y.push_back(class_from_name(row[col_label]));
    for (std::size_t i = 1; i < pads.size(); ++i)
        if (pads[i] != pads[0])
            throw data_error("feature contract mismatch: pad_to varies across rows");

    ForestModel model = train(x, y, cli.params, cli.seed, cli.jobs);
    if (!pads.empty()) model.pad_to = pads[0];
    if (model.single_class)
        std::cerr << "rf-train: warning: training data contains a single class\n";
    save_model(model, cli.out);
    std::cerr << "rf-train: " << cli.params.n_trees << " trees on " << x.size()
              << " samples -> " << cli.out << "\n";
    return 0;
}

struct PredictCli {
    std::string features_csv;
    std::string model;
    std::string out;
};

int run_predict(const PredictCli& cli) {
    const ForestModel model = load_model(cli.model);
    const CsvTable table = read_csv(cli.features_csv);
    const int col_id = table.require_column("region_id");
    const int col_tile = table.require_column("tile");
    const int col_label = table.column("label");
    std::vector<std::array<double, 5>> x;
    std::vector<int> pads;
    read_feature_rows(table, x, pads);
    for (int pad : pads)
        if (pad != model.pad_to)
            throw data_error("feature contract mismatch: features use pad_to " +
                             std::to_string(pad) + ", model expects " +
                             std::to_string(model.pad_to));

    CsvTable out;
    out.header = {"region_id", "tile"};
    if (col_label >= 0) out.header.push_back("label");
    out.header.push_back("predicted");
    for (auto name : class_names) out.header.push_back("votes_" + std::string(name));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Prediction pred = predict(model, x[i]);
        std::vector<std::string> row = {table.rows[i][col_id], table.rows[i][col_tile]};
        if (col_label >= 0) row.push_back(table.rows[i][col_label]);
        row.push_back(std::string(class_name(pred.label)));
        for (std::uint64_t v : pred.votes) row.push_back(std::to_string(v));
        out.rows.push_back(std::move(row));
    }
    write_csv(out, cli.out);
    std::cerr << "rf-predict: wrote " << out.rows.size() << " predictions to " << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCli {
    std::string mode;  // masks | classes | pr
    std::string manifest;
    std::string pred_dir;
    std::string predictions_csv;
    std::string prob;
    std::string truth;
    std::string thresholds = "";
    std::string out;
    int jobs = 1;
};

int run_evaluate_masks(const EvaluateCli& cli) {
    const DatasetManifest manifest = load_manifest(cli.manifest);
    for (const auto& entry : manifest.entries)
        if (entry.mask.empty())
            throw data_error("evaluate masks requires ground-truth masks in the manifest");

    std::vector<ConfusionCounts> counts(manifest.entries.size());
    parallel_for(manifest.entries.size(), cli.jobs, [&](std::size_t i) {
        const ManifestEntry& entry = manifest.entries[i];
        const BinaryMask truth = load_mask(manifest.resolve(entry.mask));
        const std::string pred_path =
            (fs::path(cli.pred_dir) / (stem_of(entry.image) + "_mask.pgm")).string();
        counts[i] = mask_counts(load_mask(pred_path), truth);
    });

    CsvTable out;
    out.header = {"image", "dice", "precision", "recall"};
    ConfusionCounts pooled;
    double macro_dice = 0.0;
    std::size_t vacuous_count = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        bool vacuous = false;
        const double d = dice(counts[i], &vacuous);
        if (vacuous) vacuous_count += 1;
        macro_dice += d;
        pooled.tp += counts[i].tp;
        pooled.fp += counts[i].fp;
        pooled.fn += counts[i].fn;
        pooled.tn += counts[i].tn;
        out.rows.push_back({manifest.entries[i].image, format_double(d),
                            format_double(precision(counts[i])),
                            format_double(recall(counts[i]))});
    }
    if (!counts.empty()) {
        out.rows.push_back({"micro", format_double(dice(pooled)),
                            format_double(precision(pooled)), format_double(recall(pooled))});
        out.rows.push_back({"macro", format_double(macro_dice / counts.size()), "", ""});
    }
    if (vacuous_count > 0)
        std::cerr << "evaluate: warning: " << vacuous_count
                  << " image(s) had no positives in either mask (dice defined as 1)\n";
    write_csv(out, cli.out);
    std::cerr << "evaluate: wrote per-image metrics to " << cli.out << "\n";
    return 0;
}

int run_evaluate_classes(const EvaluateCli& cli) {
    const CsvTable table = read_csv(cli.predictions_csv);
    const int col_label = table.require_column("label");
    const int col_pred = table.require_column("predicted");
    std::vector<std::pair<ClassLabel, ClassLabel>> pairs;
    for (const auto& row : table.rows)
        pairs.emplace_back(class_from_name(row[col_label]), class_from_name(row[col_pred]));
    const ConfusionMatrix cm = confusion_matrix(pairs);

    fs::create_directories(cli.out);
    CsvTable cm_table;
    cm_table.header = {"true\\predicted"};
    for (auto name : class_names) cm_table.header.push_back(std::string(name));
    for (int r = 0; r < n_classes; ++r) {
        std::vector<std::string> row = {std::string(class_names[r])};
        for (int c = 0; c < n_classes; ++c) row.push_back(std::to_string(cm.cells[r][c]));
        cm_table.rows.push_back(std::move(row));
    }
    write_csv(cm_table, (fs::path(cli.out) / "confusion_matrix.csv").string());

    CsvTable metrics;
    metrics.header = {"metric", "value"};
    std::uint64_t correct = 0, total = 0;
    for (int r = 0; r < n_classes; ++r) {
        correct += cm.cells[r][r];
        total += cm.row_sum(r);
    }
    metrics.rows.push_back({"n_samples", std::to_string(total)});
    metrics.rows.push_back(
        {"accuracy", format_double(static_cast<double>(correct) / static_cast<double>(total))});
    metrics.rows.push_back({"balanced_accuracy", format_double(balanced_accuracy(cm))});
    for (int r = 0; r < n_classes; ++r) {
        const std::uint64_t s = cm.row_sum(r);
        const double rec = s > 0 ? static_cast<double>(cm.cells[r][r]) / static_cast<double>(s)
                                 : std::numeric_limits<double>::quiet_NaN();
        metrics.rows.push_back({"recall_" + std::string(class_names[r]), format_double(rec)});
    }
    write_csv(metrics, (fs::path(cli.out) / "classification_metrics.csv").string());
    std::cerr << "evaluate: wrote confusion matrix and metrics to " << cli.out << "\n";
    return 0;
}

int run_evaluate_pr(const EvaluateCli& cli) {
    bool clamped = false;
    const ProbMap prob = load_probmap(cli.prob, &clamped);
    if (clamped) std::cerr << "evaluate: warning: probability values clamped to [0,1]\n";
    const BinaryMask truth = load_mask(cli.truth);
    std::vector<double> thresholds;
    if (cli.thresholds.empty()) {
        for (int i = 0; i <= 20; ++i) thresholds.push_back(i / 20.0);
    } else {
        thresholds = parse_double_list(cli.thresholds);
    }
    const auto curve = pr_curve(prob, truth, thresholds);
    CsvTable out;
    out.header = {"threshold", "precision", "recall"};
    for (const PrPoint& p : curve)
        out.rows.push_back(
            {format_double(p.threshold), format_double(p.precision), format_double(p.recall)});
    write_csv(out, cli.out);
    std::cerr << "evaluate: wrote PR curve to " << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// stats

struct StatsCli {
    std::string regions_csv;
    std::string predictions_csv;
    std::string out;
    int bins = 16;
};

int run_stats(const StatsCli& cli) {
    fs::create_directories(cli.out);
    const CsvTable regions = read_csv(cli.regions_csv);
    const int col_diam = regions.require_column("equivalent_diameter_px");
    const int col_ecc = regions.require_column("eccentricity");

    std::vector<double> diameters, eccs;
    for (const auto& row : regions.rows) {
        diameters.push_back(parse_double(row[col_diam]));
        eccs.push_back(parse_double(row[col_ecc]));
    }

    auto histogram = [&](const std::vector<double>& values, double lo, double hi, int bins) {
        CsvTable t;
        t.header = {"bin_lo", "bin_hi", "count"};
        const double width = (hi - lo) / bins;
        std::vector<std::size_t> counts(bins, 0);
        for (double v : values) {
            int b = static_cast<int>((v - lo) / width);
            b = std::clamp(b, 0, bins - 1);
            counts[b] += 1;
        }
        for (int b = 0; b < bins; ++b)
            t.rows.push_back({format_double(lo + b * width), format_double(lo + (b + 1) * width),
                              std::to_string(counts[b])});
        return t;
    };

    if (!diameters.empty()) {
        const double hi = *std::max_element(diameters.begin(), diameters.end());
        write_csv(histogram(diameters, 0.0, std::max(hi, 1e-9), cli.bins),
                  (fs::path(cli.out) / "size_histogram.csv").string());
        write_csv(histogram(eccs, 0.0, 1.0, 10),
                  (fs::path(cli.out) / "shape_histogram.csv").string());
    }

    CsvTable pop;
    pop.header = {"metric", "value"};
    pop.rows.push_back({"n_regions", std::to_string(regions.rows.size())});
    if (!cli.predictions_csv.empty()) {
        const CsvTable preds = read_csv(cli.predictions_csv);
        const int col_pred = preds.require_column("predicted");
        std::vector<ClassLabel> labels;
        for (const auto& row : preds.rows) labels.push_back(class_from_name(row[col_pred]));
        const PopulationStats st = population_stats(labels);
        pop.rows.push_back({"fraction_oriented", format_double(st.fraction_oriented)});
        pop.rows.push_back(
            {"fraction_faulted_of_oriented", format_double(st.fraction_faulted_of_oriented)});
    }
    write_csv(pop, (fs::path(cli.out) / "population.csv").string());
    std::cerr << "stats: wrote summaries to " << cli.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
    const Cfg cfg{load_config(argc, argv)};

    CLI::App app{"Nanoparticle segmentation and classification for HRTEM micrographs"};
    app.require_subcommand(1);
    std::string config_path;  // consumed by load_config; declared so CLI11 accepts it

    // synth ------------------------------------------------------------
    SynthCli synth_cli;
    synth_cli.params.n_tiles = cfg.integer("n_tiles", 20);
    synth_cli.params.size = cfg.integer("synth_size", 256);
    synth_cli.params.seed = cfg.uint64("seed", 1);
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    synth_cmd->add_option("--config", config_path, "JSON config with defaults");
    synth_cmd->add_option("--out", synth_cli.out, "Output directory")->required();
    synth_cmd->add_option("--n-tiles", synth_cli.params.n_tiles, "Number of tiles");
    synth_cmd->add_option("--size", synth_cli.params.size, "Tile edge, pixels");
    synth_cmd->add_option("--seed", synth_cli.params.seed, "Master seed");
    synth_cmd->add_option("--min-particles", synth_cli.params.min_particles);
    synth_cmd->add_option("--max-particles", synth_cli.params.max_particles);
    synth_cmd->add_option("--period", synth_cli.params.fringe_period, "Fringe period, px");
    synth_cmd->add_option("--amplitude", synth_cli.params.fringe_amplitude);
    synth_cmd->add_option("--lift", synth_cli.params.contrast_lift);
    synth_cmd->add_option("--noise", synth_cli.params.noise_sigma);
    synth_cmd->add_option("--background", synth_cli.params.background);
    synth_cmd->add_option("--semi-major-min", synth_cli.params.semi_major_min);
    synth_cmd->add_option("--semi-major-max", synth_cli.params.semi_major_max);
    synth_cmd->add_option("--aspect-min", synth_cli.params.aspect_min);
    synth_cmd->add_flag("--no-faults{false}", synth_cli.params.with_faults,
                        "Disable stacking-fault particles");
    synth_cmd->add_flag("--no-plain{false}", synth_cli.params.with_plain,
                        "Disable plain fringed particles");
    synth_cmd->add_flag("--no-unfringed{false}", synth_cli.params.with_unfringed,
                        "Disable unfringed (misoriented) particles");
    synth_cmd->add_option("--jobs", synth_cli.jobs, "Worker threads");

    // preprocess --------------------------------------------------------
    PreprocessCli pre_cli;
    pre_cli.tile = cfg.integer("tile", 512);
    pre_cli.kernel = cfg.integer("kernel", 3);
    pre_cli.normalize_per = cfg.str("normalize_per", "tile");
    auto* pre_cmd = app.add_subcommand("preprocess", "Median-filter, normalize, and tile images");
    pre_cmd->add_option("--config", config_path);
    pre_cmd->add_option("--manifest", pre_cli.manifest, "Input dataset manifest")->required();
    pre_cmd->add_option("--out", pre_cli.out, "Output directory")->required();
    pre_cmd->add_option("--tile", pre_cli.tile, "Tile edge, pixels");
    pre_cmd->add_option("--kernel", pre_cli.kernel, "Median kernel (odd)");
    pre_cmd->add_option("--normalize-per", pre_cli.normalize_per, "tile|image");
    pre_cmd->add_option("--jobs", pre_cli.jobs);

    // segment -----------------------------------------------------------
    SegmentCli seg_cli;
    seg_cli.method = cfg.str("method", "fourier");
    seg_cli.bins = cfg.integer("bins", 256);
    seg_cli.r_in = cfg.num("r_in", 2.0);
    seg_cli.r_out = cfg.num("r_out", 60.0);
    seg_cli.sigma = cfg.num("smooth_sigma", 2.0);
    seg_cli.mode = cfg.str("annulus_mode", "keep");
    seg_cli.threshold = cfg.num("rel_threshold", 0.3);
    seg_cli.prob_threshold = cfg.num("prob_threshold", 0.5);
    auto* seg_cmd = app.add_subcommand("segment", "Binary particle masks per tile");
    seg_cmd->add_option("--config", config_path);
    seg_cmd->add_option("--manifest", seg_cli.manifest, "Tile manifest")->required();
    seg_cmd->add_option("--out", seg_cli.out, "Output mask directory")->required();
    seg_cmd->add_option("--method", seg_cli.method, "otsu|fourier|probmap");
    seg_cmd->add_option("--bins", seg_cli.bins, "Otsu histogram bins");
    seg_cmd->add_flag("--particles-dark", seg_cli.particles_dark,
                      "Particles are darker than background (Otsu polarity)");
    seg_cmd->add_option("--r-in", seg_cli.r_in, "Annulus inner radius, cycles/image");
    seg_cmd->add_option("--r-out", seg_cli.r_out, "Annulus outer radius, cycles/image");
    seg_cmd->add_option("--sigma", seg_cli.sigma, "Post-filter Gaussian sigma, px");
    seg_cmd->add_option("--mode", seg_cli.mode, "keep|suppress annulus band");
    seg_cmd->add_option("--threshold", seg_cli.threshold, "Fraction of max response");
    seg_cmd->add_option("--prob-threshold", seg_cli.prob_threshold, "Probability cut");
    seg_cmd->add_flag("--optimize", seg_cli.optimize,
                      "Grid-search (r_in, r_out) against manifest ground truth");
    seg_cmd->add_option("--grid-r-in", seg_cli.grid_r_in, "Comma list for --optimize");
    seg_cmd->add_option("--grid-r-out", seg_cli.grid_r_out, "Comma list for --optimize");
    seg_cmd->add_option("--jobs", seg_cli.jobs);

    // regions -------------------------------------------------------------
    RegionsCli reg_cli;
    reg_cli.close_radius = cfg.integer("close_radius", 2);
    reg_cli.open_radius = cfg.integer("open_radius", 2);
    reg_cli.min_area = static_cast<std::size_t>(cfg.integer("min_area", 64));
    reg_cli.max_area_fraction = cfg.num("max_area_fraction", 0.25);
    reg_cli.margin = cfg.integer("margin", 8);
    auto* reg_cmd = app.add_subcommand("regions", "Isolate per-particle regions from masks");
    reg_cmd->add_option("--config", config_path);
    reg_cmd->add_option("--manifest", reg_cli.manifest, "Tile manifest")->required();
    reg_cmd->add_option("--masks-dir", reg_cli.masks_dir, "Directory of *_mask.pgm")->required();
    reg_cmd->add_option("--out", reg_cli.out, "Output directory")->required();
    reg_cmd->add_option("--close", reg_cli.close_radius, "Closing radius (0 = skip)");
    reg_cmd->add_option("--open", reg_cli.open_radius, "Opening radius (0 = skip)");
    reg_cmd->add_option("--min-area", reg_cli.min_area, "Minimum region area, px");
    reg_cmd->add_option("--max-area-fraction", reg_cli.max_area_fraction,
                        "Maximum region area as a fraction of the tile");
    reg_cmd->add_option("--margin", reg_cli.margin, "Crop margin, px");
    reg_cmd->add_option("--jobs", reg_cli.jobs);

    // features ------------------------------------------------------------
    FeaturesCli feat_cli;
    feat_cli.pad_to = cfg.integer("pad_to", 128);
    feat_cli.overlap_threshold = cfg.num("overlap_threshold", 0.5);
    auto* feat_cmd = app.add_subcommand("features", "Spectral/real-space region descriptors");
    feat_cmd->add_option("--config", config_path);
    feat_cmd->add_option("--regions", feat_cli.regions_csv, "regions.csv path")->required();
    feat_cmd->add_option("--out", feat_cli.out, "Output features.csv")->required();
    feat_cmd->add_option("--pad-to", feat_cli.pad_to, "Spectral frame size, px");
    feat_cmd->add_flag("--include-dc", feat_cli.include_dc,
                       "Keep the DC bin in the radial profile stats");
    feat_cmd->add_option("--truth-ids-dir", feat_cli.truth_ids_dir,
                         "Directory of <tile>_ids.pgm truth label images");
    feat_cmd->add_option("--truth-classes", feat_cli.truth_classes,
                         "classes.csv mapping (tile, particle_id) to class");
    feat_cmd->add_option("--overlap-threshold", feat_cli.overlap_threshold,
                         "Dominant-particle overlap needed to inherit its class");
    feat_cmd->add_option("--jobs", feat_cli.jobs);

    // rf-train -------------------------------------------------------------
    TrainCli train_cli;
    train_cli.params.n_trees = cfg.integer("n_trees", 500);
    train_cli.params.max_features = cfg.integer("max_features", 2);
    train_cli.params.min_leaf = static_cast<std::size_t>(cfg.integer("min_leaf", 1));
    train_cli.seed = cfg.uint64("seed", 0);
    auto* train_cmd = app.add_subcommand("rf-train", "Train the random forest");
    train_cmd->add_option("--config", config_path);
    train_cmd->add_option("--features", train_cli.features_csv, "Labeled features.csv")
        ->required();
    train_cmd->add_option("--out", train_cli.out, "Output model JSON")->required();
    train_cmd->add_option("--n-trees", train_cli.params.n_trees);
    train_cmd->add_option("--max-features", train_cli.params.max_features);
    train_cmd->add_option("--min-leaf", train_cli.params.min_leaf);
    train_cmd->add_option("--seed", train_cli.seed, "Training seed");
    train_cmd->add_option("--jobs", train_cli.jobs);

    // rf-predict -------------------------------------------------------------
    PredictCli pred_cli;
    auto* pred_cmd = app.add_subcommand("rf-predict", "Classify regions with a trained model");
    pred_cmd->add_option("--config", config_path);
    pred_cmd->add_option("--features", pred_cli.features_csv, "features.csv")->required();
    pred_cmd->add_option("--model", pred_cli.model, "Model JSON")->required();
    pred_cmd->add_option("--out", pred_cli.out, "Output predictions.csv")->required();

    // evaluate -------------------------------------------------------------
    EvaluateCli eval_cli;
    auto* eval_cmd = app.add_subcommand("evaluate", "Segmentation / classification metrics");
    eval_cmd->add_option("--config", config_path);
    eval_cmd->add_option("--mode", eval_cli.mode, "masks|classes|pr")->required();
    eval_cmd->add_option("--manifest", eval_cli.manifest, "Manifest with truth masks");
    eval_cmd->add_option("--pred-dir", eval_cli.pred_dir, "Directory of predicted masks");
    eval_cmd->add_option("--predictions", eval_cli.predictions_csv,
                         "predictions.csv with label + predicted columns");
    eval_cmd->add_option("--prob", eval_cli.prob, "Probability map file (pr mode)");
    eval_cmd->add_option("--truth", eval_cli.truth, "Truth mask file (pr mode)");
    eval_cmd->add_option("--thresholds", eval_cli.thresholds, "Comma list (pr mode)");
    eval_cmd->add_option("--out", eval_cli.out, "Output CSV (masks, pr) or directory (classes)")
        ->required();
    eval_cmd->add_option("--jobs", eval_cli.jobs);

    // stats -------------------------------------------------------------
    StatsCli stats_cli;
    auto* stats_cmd = app.add_subcommand("stats", "Size/shape histograms and population stats");
    stats_cmd->add_option("--config", config_path);
    stats_cmd->add_option("--regions", stats_cli.regions_csv, "regions.csv")->required();
    stats_cmd->add_option("--predictions", stats_cli.predictions_csv,
                          "predictions.csv (enables population stats)");
    stats_cmd->add_option("--out", stats_cli.out, "Output directory")->required();
    stats_cmd->add_option("--bins", stats_cli.bins, "Histogram bins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (synth_cmd->parsed()) return run_synth(synth_cli);
    if (pre_cmd->parsed()) return run_preprocess(pre_cli);
    if (seg_cmd->parsed()) return run_segment(seg_cli);
    if (reg_cmd->parsed()) return run_regions(reg_cli);
    if (feat_cmd->parsed()) return run_features(feat_cli);
    if (train_cmd->parsed()) return run_train(train_cli);
    if (pred_cmd->parsed()) return run_predict(pred_cli);
    if (eval_cmd->parsed()) {
        if (eval_cli.mode == "masks") return run_evaluate_masks(eval_cli);
        if (eval_cli.mode == "classes") return run_evaluate_classes(eval_cli);
        if (eval_cli.mode == "pr") return run_evaluate_pr(eval_cli);
        throw std::invalid_argument("--mode must be masks, classes, or pr");
    }
    if (stats_cmd->parsed()) return run_stats(stats_cli);
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
