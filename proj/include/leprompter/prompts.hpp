#pragma once

#include <optional>
#include <string>
#include <vector>

#include "leprompter/mask.hpp"

namespace leprompter {

/// Hard cap on points per prompt; the encoder's token budget is built around it.
inline constexpr int kMaxPoints = 9;

enum class PointKind { Center, Random };
enum class MaskKind { Filled, Unfilled };

struct PointPrompt {
    PointKind kind = PointKind::Random;
    std::vector<Pixel> points;
};

/// Inclusive pixel bounds.
struct BoxPrompt {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;
    friend bool operator==(const BoxPrompt&, const BoxPrompt&) = default;
};

struct MaskPrompt {
    MaskKind kind = MaskKind::Unfilled;
    BinaryMask raster;
};

/// Arguments of the prompt encoder. Absent entries are explicit empties.
struct PromptSet {
    std::optional<PointPrompt> points;
    std::optional<BoxPrompt> box;
    std::optional<MaskPrompt> mask;

    bool has_points() const { return points.has_value() && !points->points.empty(); }
};

/// Throws ContractError if any coordinate lies outside width×height or if
/// more than kMaxPoints points are present.
void validate_prompts(const PromptSet& prompts, int width, int height);

const char* to_string(PointKind kind);
const char* to_string(MaskKind kind);

} // namespace leprompter
