#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leprompter/mask.hpp"
#include "leprompter/prompts.hpp"

namespace leprompter {

/// 3-channel real image, planar (channel-major) layout, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data; // size 3·width·height

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, 0.0) {}

    double& at(int c, int x, int y) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int x, int y) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit interleaved RGB, as written to overlay PNGs.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // size 3·width·height, RGBRGB...

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, 0) {}

    std::array<std::uint8_t, 3> pixel(int x, int y) const {
        const auto i = 3 * (static_cast<std::size_t>(y) * width + x);
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set_pixel(int x, int y, std::array<std::uint8_t, 3> rgb) {
        const auto i = 3 * (static_cast<std::size_t>(y) * width + x);
        data[i] = rgb[0];
        data[i + 1] = rgb[1];
        data[i + 2] = rgb[2];
    }
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct Scene {
    Image image;
    BinaryMask mask;
    std::string id;
};

struct SynthConfig {
    int count = 16;
    int size = 32;
    std::uint64_t seed = 0;
    int blob_min = 1;
    int blob_max = 3;
    double noise_std = 0.1;

    void validate() const;
};

// Masks: `.png` selects 8-bit grayscale PNG, anything else the text grid
// format (first line "W H", then H rows of W characters from {0,1}).
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

BinaryMask parse_text_grid(const std::string& text);
std::string format_text_grid(const BinaryMask& mask);

/// Reads 8-bit RGB or grayscale PNG; gray is replicated to three channels.
Image load_image(const std::filesystem::path& path);
/// Writes 8-bit RGB; values are clamped to [0,1] and rounded.
void save_image(const Image& image, const std::filesystem::path& path);
void save_rgb(const RgbImage& image, const std::filesystem::path& path);
RgbImage load_rgb(const std::filesystem::path& path);

RgbImage to_rgb8(const Image& image);

/// Overlay colors. Ground truth is tinted, the prediction drawn as its
/// boundary, the mask prompt blended at 50%, the box outlined at 1 px and
/// points drawn as discs of radius 2.
struct OverlayStyle {
    std::array<std::uint8_t, 3> gt_tint{0, 170, 255};
    double gt_alpha = 0.35;
    std::array<std::uint8_t, 3> prediction{255, 220, 0};
    std::array<std::uint8_t, 3> mask_prompt{255, 0, 255};
    std::array<std::uint8_t, 3> box{255, 40, 40};
    std::array<std::uint8_t, 3> point{40, 255, 40};
    int point_radius = 2;
};

RgbImage render_overlay(const Scene& scene, const PromptSet* prompts = nullptr,
                        const BinaryMask* prediction = nullptr, const OverlayStyle& style = {});

std::vector<Scene> gen_synthetic_dataset(const SynthConfig& cfg);

/// Writes `<id>.img.png` and `<id>.mask.png` into `dir`.
void save_scene(const Scene& scene, const std::filesystem::path& dir);
/// Loads every `<id>.img.png`/`<id>.mask.png` pair in `dir`, sorted by id.
std::vector<Scene> load_dataset_dir(const std::filesystem::path& dir);

} // namespace leprompter
