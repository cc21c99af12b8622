#include "leprompter/promptgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "leprompter/morphology.hpp"
#include "leprompter/rng.hpp"

namespace leprompter {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_k(int k) {
    if (k < 1 || k > kMaxPoints) {
        throw ContractError("point count must be in [1," + std::to_string(kMaxPoints) + "], got " +
                            std::to_string(k));
    }
}

std::vector<Pixel> require_union(const std::vector<PixelCluster>& clusters) {
    auto all = cluster_union(clusters);
    if (all.empty()) throw ContractError("point prompts need at least one cluster");
    return all;
}

} // namespace

PointResult gen_random_points(const BinaryMask& mask, const std::vector<PixelCluster>& clusters,
                              int k, std::uint64_t seed) {
    check_k(k);
    const auto all = require_union(clusters);
    for (const auto& p : all) {
        if (!mask.in_bounds(p.x, p.y)) throw ContractError("cluster pixel outside mask");
    }
    Rng rng(seed);
    PointResult out;
    out.prompt.kind = PointKind::Random;
    for (auto i : rng.sample_indices(all.size(), static_cast<std::size_t>(k))) {
        out.prompt.points.push_back(all[i]);
    }
    out.short_of_k = all.size() < static_cast<std::size_t>(k);
    return out;
}

PointResult gen_center_points(const BinaryMask& mask, const std::vector<PixelCluster>& clusters,
                              int k, std::uint64_t seed, int shift) {
    check_k(k);
    if (shift < 0) throw ContractError("center point shift must be >= 0");
    auto all = require_union(clusters);
    const auto c = centroid(all);
    auto dist2 = [&](Pixel p) { return (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y); };
    // `all` is row-major, so a stable sort breaks distance ties in row-major order.
    std::stable_sort(all.begin(), all.end(), [&](Pixel a, Pixel b) { return dist2(a) < dist2(b); });

    const auto take = std::min(all.size(), static_cast<std::size_t>(k));
    Rng rng(seed);
    PointResult out;
    out.prompt.kind = PointKind::Center;
    out.short_of_k = take < static_cast<std::size_t>(k);
    const auto on_cluster = cluster_union(clusters);
    BinaryMask member(mask.width(), mask.height());
    for (const auto& p : on_cluster) member.set(p.x, p.y, true);

    for (std::size_t i = 0; i < take; ++i) {
        Pixel p = all[i];
        if (shift > 0) {
            p.x = std::clamp(p.x + static_cast<int>(rng.uniform_int(-shift, shift)), 0, mask.width() - 1);
            p.y = std::clamp(p.y + static_cast<int>(rng.uniform_int(-shift, shift)), 0, mask.height() - 1);
        }
        if (!member.at(p.x, p.y)) {
            // Snap to the nearest cluster pixel; row-major order breaks ties.
            long best = -1;
            Pixel snapped = p;
            for (const auto& q : on_cluster) {
                const long d = static_cast<long>(q.x - p.x) * (q.x - p.x) +
                               static_cast<long>(q.y - p.y) * (q.y - p.y);
                if (best < 0 || d < best) {
                    best = d;
                    snapped = q;
                }
            }
            p = snapped;
        }
        out.prompt.points.push_back(p);
    }
    return out;
}

std::optional<BoxPrompt> gen_box(const std::vector<PixelCluster>& clusters) {
    const auto all = cluster_union(clusters);
    if (all.empty()) return std::nullopt;
    const auto e = bounding_extremes(all);
    return BoxPrompt{e.x_min, e.y_min, e.x_max, e.y_max};
}

std::size_t unfilled_sample_count(std::size_t foreground, double ratio) {
    const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(foreground)));
    return std::max<std::size_t>(1, std::min(n, foreground));
}

UnfilledResult gen_unfilled_mask(const BinaryMask& gt, std::uint64_t seed,
                                 const UnfilledMaskParams& params) {
    std::vector<Pixel> fg;
    for (int y = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x) {
            if (gt.at(x, y)) fg.push_back({x, y});
        }
    }
    if (fg.empty()) throw ContractError("unfilled mask needs at least one foreground pixel");
    Rng rng(seed);
    UnfilledResult out;
    out.sample_count = unfilled_sample_count(fg.size(), params.sample_ratio);
    BinaryMask seeds(gt.width(), gt.height());
    for (auto i : rng.sample_indices(fg.size(), out.sample_count)) {
        Pixel p = fg[i];
        p.x = std::clamp(p.x + static_cast<int>(rng.uniform_int(-params.shift, params.shift)), 0, gt.width() - 1);
        p.y = std::clamp(p.y + static_cast<int>(rng.uniform_int(-params.shift, params.shift)), 0, gt.height() - 1);
        seeds.set(p.x, p.y, true);
    }
    const auto se = StructuringElement::square(params.se_size);
    out.prompt.kind = MaskKind::Unfilled;
    out.prompt.raster = close(dilate(seeds, se, params.dilate_iterations), se);
    return out;
}

MaskPrompt gen_filled_mask(const MaskPrompt& unfilled) {
    if (unfilled.kind != MaskKind::Unfilled) throw ContractError("gen_filled_mask expects an unfilled mask");
    const auto& r = unfilled.raster;
    return {MaskKind::Filled, fill_contours(trace_contours(r), r.width(), r.height())};
}

PromptRasters rasterize(const PromptSet& prompts, int width, int height) {
    validate_prompts(prompts, width, height);
    PromptRasters out{BinaryMask(width, height), BinaryMask(width, height), BinaryMask(width, height)};
    if (prompts.has_points()) {
        out.has_points = true;
        for (const auto& p : prompts.points->points) out.points.set(p.x, p.y, true);
    }
    if (prompts.box) {
        out.has_box = true;
        const auto& b = *prompts.box;
        for (int x = b.x_min; x <= b.x_max; ++x) {
            out.box.set(x, b.y_min, true);
            out.box.set(x, b.y_max, true);
        }
        for (int y = b.y_min; y <= b.y_max; ++y) {
            out.box.set(b.x_min, y, true);
            out.box.set(b.x_max, y, true);
        }
    }
    if (prompts.mask) {
        out.has_mask = true;
        out.mask = prompts.mask->raster;
    }
    return out;
}

const BenchmarkRecord* BenchmarkManifest::find(const std::string& id) const {
    for (const auto& r : records) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

namespace {

BinaryMask points_raster(const std::vector<Pixel>& pts, int w, int h) {
    BinaryMask m(w, h);
    for (const auto& p : pts) m.set(p.x, p.y, true);
    return m;
}

BenchmarkRecord build_record(const Scene& scene, const BenchmarkConfig& cfg,
                             const std::optional<fs::path>& out_dir) {
    const auto& gt = scene.mask;
    BenchmarkRecord rec;
    rec.id = scene.id;
    rec.seed = derive_seed(cfg.master_seed, scene.id);
    rec.dbscan = cfg.dbscan;
    rec.width = gt.width();
    rec.height = gt.height();

    if (gt.count() == 0) {
        rec.flags.push_back("empty_mask");
        return rec;
    }
    const auto clusters = dbscan(gt, cfg.dbscan);
    if (clusters.empty()) {
        rec.flags.push_back("no_clusters");
    } else {
        if (cfg.kinds != PointKinds::Center) {
            auto r = gen_random_points(gt, clusters, cfg.point_count, derive_seed(rec.seed, "points_random"));
            rec.points_random = std::move(r.prompt.points);
            if (r.short_of_k) rec.flags.push_back("points_random_short");
        }
        if (cfg.kinds != PointKinds::Random) {
            auto c = gen_center_points(gt, clusters, cfg.point_count, derive_seed(rec.seed, "points_center"),
                                       cfg.center_shift);
            rec.points_center = std::move(c.prompt.points);
            if (c.short_of_k) rec.flags.push_back("points_center_short");
        }
        rec.box = gen_box(clusters);
    }
    auto unfilled = gen_unfilled_mask(gt, derive_seed(rec.seed, "mask_unfilled"), cfg.unfilled);
    rec.unfilled_sample_count = unfilled.sample_count;
    auto filled = gen_filled_mask(unfilled.prompt);
    rec.mask_unfilled = std::move(unfilled.prompt.raster);
    rec.mask_filled = std::move(filled.raster);

    if (out_dir) {
        const int w = rec.width, h = rec.height;
        PromptSet box_only;
        box_only.box = rec.box;
        const std::string stem = rec.id + ".";
        save_mask(points_raster(rec.points_random, w, h), *out_dir / (stem + "points_random.png"));
        save_mask(points_raster(rec.points_center, w, h), *out_dir / (stem + "points_center.png"));
        save_mask(rasterize(box_only, w, h).box, *out_dir / (stem + "box.png"));
        rec.mask_unfilled_path = stem + "mask_unfilled.png";
        rec.mask_filled_path = stem + "mask_filled.png";
        save_mask(*rec.mask_unfilled, *out_dir / rec.mask_unfilled_path);
        save_mask(*rec.mask_filled, *out_dir / rec.mask_filled_path);
    }
    return rec;
}

json points_json(const std::vector<Pixel>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back({p.x, p.y});
    return a;
}

std::vector<Pixel> points_from_json(const json& a) {
    std::vector<Pixel> pts;
    for (const auto& p : a) pts.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    return pts;
}

} // namespace

BenchmarkManifest build_benchmark(const std::vector<Scene>& scenes, const BenchmarkConfig& config,
                                  const std::optional<fs::path>& out_dir) {
    if (scenes.empty()) throw ContractError("build_benchmark: no scenes");
    config.dbscan.validate();
    check_k(config.point_count);
    if (out_dir) {
        std::error_code ec;
        fs::create_directories(*out_dir, ec);
        if (!fs::is_directory(*out_dir)) throw IoError("not a directory: " + out_dir->string());
    }

    BenchmarkManifest manifest;
    manifest.master_seed = config.master_seed;
    manifest.point_count = config.point_count;
    manifest.records.resize(scenes.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < scenes.size(); i = next++) {
            try {
                manifest.records[i] = build_record(scenes[i], config, out_dir);
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    try {
                        throw IoError("scene " + scenes[i].id + ": " + e.what());
                    } catch (...) {
                        failure = std::current_exception();
                    }
                }
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(scenes.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    if (out_dir) {
        std::ofstream out(*out_dir / "manifest.json", std::ios::binary);
        out << manifest_to_json(manifest);
        if (!out) throw IoError("cannot write " + (*out_dir / "manifest.json").string());
    }
    return manifest;
}

std::string manifest_to_json(const BenchmarkManifest& manifest) {
    json records = json::array();
    for (const auto& r : manifest.records) {
        json j;
        j["id"] = r.id;
        j["seed"] = r.seed;
        j["width"] = r.width;
        j["height"] = r.height;
        j["dbscan"] = {{"eps", r.dbscan.eps}, {"min_pts", r.dbscan.min_pts}};
        j["points_random"] = points_json(r.points_random);
        j["points_center"] = points_json(r.points_center);
        j["box"] = r.box ? json{r.box->x_min, r.box->y_min, r.box->x_max, r.box->y_max} : json(nullptr);
        j["mask_unfilled"] = r.mask_unfilled_path.empty() ? json(nullptr) : json(r.mask_unfilled_path);
        j["mask_filled"] = r.mask_filled_path.empty() ? json(nullptr) : json(r.mask_filled_path);
        j["unfilled_sample_count"] = r.unfilled_sample_count;
        j["flags"] = r.flags;
        records.push_back(std::move(j));
    }
    json root;
    root["format"] = "leprompter-benchmark";
    root["version"] = 1;
    root["master_seed"] = manifest.master_seed;
    root["point_count"] = manifest.point_count;
    root["records"] = std::move(records);
    return root.dump(2) + "\n";
}

BenchmarkManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (root.value("format", "") != "leprompter-benchmark" || root.value("version", 0) != 1) {
        throw FormatError(path.string() + ": not a version-1 benchmark manifest");
    }
    const auto dir = path.parent_path();
    BenchmarkManifest m;
    try {
        m.master_seed = root.at("master_seed").get<std::uint64_t>();
        m.point_count = root.at("point_count").get<int>();
        for (const auto& j : root.at("records")) {
            BenchmarkRecord r;
            r.id = j.at("id").get<std::string>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.width = j.at("width").get<int>();
            r.height = j.at("height").get<int>();
            r.dbscan = {j.at("dbscan").at("eps").get<double>(), j.at("dbscan").at("min_pts").get<int>()};
            r.points_random = points_from_json(j.at("points_random"));
            r.points_center = points_from_json(j.at("points_center"));
            if (!j.at("box").is_null()) {
                const auto& b = j.at("box");
                r.box = BoxPrompt{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
            }
            if (!j.at("mask_unfilled").is_null()) {
                r.mask_unfilled_path = j.at("mask_unfilled").get<std::string>();
                r.mask_unfilled = load_mask(dir / r.mask_unfilled_path);
            }
            if (!j.at("mask_filled").is_null()) {
                r.mask_filled_path = j.at("mask_filled").get<std::string>();
                r.mask_filled = load_mask(dir / r.mask_filled_path);
            }
            r.unfilled_sample_count = j.at("unfilled_sample_count").get<std::size_t>();
            r.flags = j.at("flags").get<std::vector<std::string>>();
            m.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return m;
}

void PromptCombination::validate() const {
    if (center_points && random_points) {
        throw ContractError("prompt combination: choose center or random points, not both");
    }
    if (filled_mask && unfilled_mask) {
        throw ContractError("prompt combination: choose filled or unfilled mask, not both");
    }
    if (point_count < 0 || point_count > kMaxPoints) {
        throw ContractError("prompt combination: point count must be in [0,9]");
    }
}

PromptCombination parse_prompt_combination(const std::string& text) {
    PromptCombination c;
    c.random_points = false;
    c.point_count = 0;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item == "none") continue;
        std::string name = item;
        std::optional<int> k;
        if (auto colon = item.find(':'); colon != std::string::npos) {
            name = item.substr(0, colon);
            try {
                k = std::stoi(item.substr(colon + 1));
            } catch (const std::exception&) {
                throw ContractError("prompt combination: bad point count in '" + item + "'");
            }
        }
        if (name == "random_points" || name == "center_points") {
            (name == "random_points" ? c.random_points : c.center_points) = true;
            c.point_count = k.value_or(3);
        } else if (k) {
            throw ContractError("prompt combination: only point prompts take a count ('" + item + "')");
        } else if (name == "box") {
            c.box = true;
        } else if (name == "filled_mask") {
            c.filled_mask = true;
        } else if (name == "unfilled_mask") {
            c.unfilled_mask = true;
        } else {
            throw ContractError("prompt combination: unknown prompt '" + name + "'");
        }
    }
    c.validate();
    return c;
}

PromptSet assemble_prompts(const BenchmarkRecord& record, const PromptCombination& combination) {
    PromptSet ps;
    if ((combination.random_points || combination.center_points) && combination.point_count > 0) {
        const auto& src = combination.random_points ? record.points_random : record.points_center;
        PointPrompt pp;
        pp.kind = combination.random_points ? PointKind::Random : PointKind::Center;
        const auto n = std::min(src.size(), static_cast<std::size_t>(combination.point_count));
        pp.points.assign(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n));
        if (!pp.points.empty()) ps.points = std::move(pp);
    }
    if (combination.box) ps.box = record.box;
    if (combination.unfilled_mask && record.mask_unfilled) {
        ps.mask = MaskPrompt{MaskKind::Unfilled, *record.mask_unfilled};
    }
    if (combination.filled_mask && record.mask_filled) {
        ps.mask = MaskPrompt{MaskKind::Filled, *record.mask_filled};
    }
    return ps;
}

} // namespace leprompter
