#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leprompter/clustering.hpp"
#include "leprompter/mask.hpp"
#include "leprompter/prompts.hpp"
#include "leprompter/raster_io.hpp"

namespace leprompter {

struct PointResult {
    PointPrompt prompt;
    /// Fewer than k pixels were available.
    bool short_of_k = false;
};

/// k distinct pixels drawn uniformly without replacement from the union of
/// cluster pixels.
PointResult gen_random_points(const BinaryMask& mask, const std::vector<PixelCluster>& clusters,
                              int k, std::uint64_t seed);

/// The k cluster pixels nearest the centroid of all cluster pixels (ties
/// row-major), each shifted by an independent uniform offset in
/// [-shift, shift]², clamped to the image and snapped to the nearest
/// cluster pixel if it lands on background.
PointResult gen_center_points(const BinaryMask& mask, const std::vector<PixelCluster>& clusters,
                              int k, std::uint64_t seed, int shift = 2);

/// One box over the union of all clusters; nullopt when there are none.
std::optional<BoxPrompt> gen_box(const std::vector<PixelCluster>& clusters);

struct UnfilledMaskParams {
    double sample_ratio = 0.008;
    int shift = 2;
    int se_size = 5;
    int dilate_iterations = 2;
};

struct UnfilledResult {
    MaskPrompt prompt;
    std::size_t sample_count = 0;
};

/// Samples ceil(ratio·|fg|) (at least 1) ground-truth pixels, jitters them,
/// then dilates and closes the seed raster.
UnfilledResult gen_unfilled_mask(const BinaryMask& gt, std::uint64_t seed,
                                 const UnfilledMaskParams& params = {});
std::size_t unfilled_sample_count(std::size_t foreground, double ratio = 0.008);

MaskPrompt gen_filled_mask(const MaskPrompt& unfilled);

struct PromptRasters {
    BinaryMask points;
    BinaryMask box;
    BinaryMask mask;
    bool has_points = false;
    bool has_box = false;
    bool has_mask = false;
};

PromptRasters rasterize(const PromptSet& prompts, int width, int height);

enum class PointKinds { Both, Random, Center };

struct BenchmarkConfig {
    std::uint64_t master_seed = 0;
    DbscanParams dbscan;
    int point_count = kMaxPoints;
    PointKinds kinds = PointKinds::Both;
    int center_shift = 2;
    UnfilledMaskParams unfilled;
    int jobs = 1;
};

struct BenchmarkRecord {
    std::string id;
    std::uint64_t seed = 0;
    DbscanParams dbscan;
    std::vector<Pixel> points_random;
    std::vector<Pixel> points_center;
    std::optional<BoxPrompt> box;
    std::optional<BinaryMask> mask_unfilled;
    std::optional<BinaryMask> mask_filled;
    std::string mask_unfilled_path;
    std::string mask_filled_path;
    std::size_t unfilled_sample_count = 0;
    std::vector<std::string> flags;
    int width = 0;
    int height = 0;
};

struct BenchmarkManifest {
    std::uint64_t master_seed = 0;
    int point_count = kMaxPoints;
    std::vector<BenchmarkRecord> records;

    const BenchmarkRecord* find(const std::string& id) const;
};

/// Names of the five rasters written per scene, as `<id>.<variant>.png`.
inline constexpr const char* kPromptVariants[] = {"points_random", "points_center", "box",
                                                  "mask_unfilled", "mask_filled"};

/// Per-scene seed = derive_seed(master, id). Generates every prompt
/// variant; when `out_dir` is set, writes the five rasters per scene plus
/// `manifest.json`.
BenchmarkManifest build_benchmark(const std::vector<Scene>& scenes, const BenchmarkConfig& config,
                                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string manifest_to_json(const BenchmarkManifest& manifest);
/// Loads a manifest and the mask rasters it references (relative to its directory).
BenchmarkManifest load_manifest(const std::filesystem::path& path);

/// Which prompts the prompted training stage feeds to the encoder.
struct PromptCombination {
    bool center_points = false;
    bool random_points = true;
    bool box = false;
    bool filled_mask = false;
    bool unfilled_mask = false;
    int point_count = 3;

    void validate() const;
    bool any() const { return center_points || random_points || box || filled_mask || unfilled_mask; }
};

/// Parses comma-separated items such as "random_points:3,box,unfilled_mask".
PromptCombination parse_prompt_combination(const std::string& text);

PromptSet assemble_prompts(const BenchmarkRecord& record, const PromptCombination& combination);

} // namespace leprompter
