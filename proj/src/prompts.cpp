#include "leprompter/prompts.hpp"

namespace leprompter {

void validate_prompts(const PromptSet& prompts, int width, int height) {
    auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < width && y < height; };
    if (prompts.points) {
        const auto& pts = prompts.points->points;
        if (pts.size() > static_cast<std::size_t>(kMaxPoints)) {
            throw ContractError("prompt has " + std::to_string(pts.size()) +
                                " points; at most " + std::to_string(kMaxPoints) + " allowed");
        }
        for (const auto& p : pts) {
            if (!inside(p.x, p.y)) {
                throw ContractError("point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                    ") outside " + std::to_string(width) + "x" +
                                    std::to_string(height));
            }
        }
    }
    if (prompts.box) {
        const auto& b = *prompts.box;
        if (!inside(b.x_min, b.y_min) || !inside(b.x_max, b.y_max) || b.x_min > b.x_max ||
            b.y_min > b.y_max) {
            throw ContractError("box (" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) +
                                ")-(" + std::to_string(b.x_max) + "," + std::to_string(b.y_max) +
                                ") invalid for " + std::to_string(width) + "x" +
                                std::to_string(height));
        }
    }
    if (prompts.mask && (prompts.mask->raster.width() != width ||
                         prompts.mask->raster.height() != height)) {
        throw ContractError("mask prompt extent does not match image");
    }
}

const char* to_string(PointKind kind) { return kind == PointKind::Center ? "center" : "random"; }
const char* to_string(MaskKind kind) { return kind == MaskKind::Filled ? "filled" : "unfilled"; }

} // namespace leprompter
