#include "leprompter/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "leprompter/rng.hpp"

namespace leprompter {

namespace fs = std::filesystem;

namespace {

struct PngHeader {
    int width = 0;
    int height = 0;
    int bit_depth = 0;
    int color_type = 0;
};

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
}

// IHDR is always the first chunk, at a fixed offset after the signature.
PngHeader read_png_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    unsigned char buf[26];
    in.read(reinterpret_cast<char*>(buf), sizeof(buf));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(buf)) || png_sig_cmp(buf, 0, 8) != 0) {
        throw FormatError(path.string() + ": not a PNG file");
    }
    if (std::string(reinterpret_cast<char*>(buf + 12), 4) != "IHDR") {
        throw FormatError(path.string() + ": missing IHDR chunk");
    }
    return {static_cast<int>(read_be32(buf + 16)), static_cast<int>(read_be32(buf + 20)), buf[24],
            buf[25]};
}

std::vector<std::uint8_t> decode_png(const fs::path& path, png_uint_32 format, int& width,
                                     int& height) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw FormatError(path.string() + ": " + image.message);
    }
    image.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(path.string() + ": " + image.message);
    }
    width = static_cast<int>(image.width);
    height = static_cast<int>(image.height);
    return buffer;
}

void encode_png(const fs::path& path, png_uint_32 format, int width, int height,
                const std::uint8_t* pixels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + image.message);
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_png_path(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::uint8_t blend(std::uint8_t base, std::uint8_t over, double alpha) {
    return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * base + alpha * over));
}

} // namespace

BinaryMask parse_text_grid(const std::string& text) {
    std::istringstream in(text);
    int w = -1, h = -1;
    if (!(in >> w >> h) || w < 0 || h < 0) throw FormatError("text grid: bad header, expected 'W H'");
    std::vector<std::uint8_t> data;
    data.reserve(static_cast<std::size_t>(w) * h);
    std::string row;
    for (int y = 0; y < h; ++y) {
        if (!(in >> row)) throw FormatError("text grid: expected " + std::to_string(h) + " rows");
        if (static_cast<int>(row.size()) != w) {
            throw FormatError("text grid: row " + std::to_string(y) + " has " +
                              std::to_string(row.size()) + " characters, expected " +
                              std::to_string(w));
        }
        for (char c : row) {
            if (c != '0' && c != '1') throw FormatError(std::string("text grid: invalid character '") + c + "'");
            data.push_back(c == '1');
        }
    }
    return BinaryMask(w, h, std::move(data));
}

std::string format_text_grid(const BinaryMask& mask) {
    std::string out = std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n";
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) out.push_back(mask.at(x, y) ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

BinaryMask load_mask(const fs::path& path) {
    if (!is_png_path(path)) return parse_text_grid(read_file(path));
    const auto header = read_png_header(path);
    if (header.bit_depth != 8) {
        throw FormatError(path.string() + ": unsupported bit depth " +
                          std::to_string(header.bit_depth) + " (expected 8)");
    }
    if (header.color_type != PNG_COLOR_TYPE_GRAY) {
        throw FormatError(path.string() + ": unsupported color type " +
                          std::to_string(header.color_type) + " (expected single-channel grayscale)");
    }
    int w = 0, h = 0;
    auto pixels = decode_png(path, PNG_FORMAT_GRAY, w, h);
    for (auto& v : pixels) v = v > 127 ? 1 : 0;
    return BinaryMask(w, h, std::move(pixels));
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
    if (!is_png_path(path)) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << format_text_grid(mask);
        if (!out) throw IoError("cannot write " + path.string());
        return;
    }
    std::vector<std::uint8_t> pixels(mask.data().size());
    std::transform(mask.data().begin(), mask.data().end(), pixels.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    encode_png(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), pixels.data());
}

RgbImage load_rgb(const fs::path& path) {
    const auto header = read_png_header(path);
    if (header.bit_depth != 8) {
        throw FormatError(path.string() + ": unsupported bit depth " +
                          std::to_string(header.bit_depth) + " (expected 8)");
    }
    RgbImage out;
    out.data = decode_png(path, PNG_FORMAT_RGB, out.width, out.height);
    return out;
}

Image load_image(const fs::path& path) {
    const auto rgb = load_rgb(path);
    Image img(rgb.width, rgb.height);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const auto p = rgb.pixel(x, y);
            for (int c = 0; c < 3; ++c) img.at(c, x, y) = p[c] / 255.0;
        }
    }
    return img;
}

RgbImage to_rgb8(const Image& image) {
    RgbImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            out.set_pixel(x, y, {to_byte(image.at(0, x, y)), to_byte(image.at(1, x, y)),
                                 to_byte(image.at(2, x, y))});
        }
    }
    return out;
}

void save_image(const Image& image, const fs::path& path) { save_rgb(to_rgb8(image), path); }

void save_rgb(const RgbImage& image, const fs::path& path) {
    encode_png(path, PNG_FORMAT_RGB, image.width, image.height, image.data.data());
}

RgbImage render_overlay(const Scene& scene, const PromptSet* prompts, const BinaryMask* prediction,
                        const OverlayStyle& style) {
    const int w = scene.image.width;
    const int h = scene.image.height;
    if (scene.mask.width() != w || scene.mask.height() != h) {
        throw ContractError("render_overlay: mask extent does not match image");
    }
    if (prediction && (prediction->width() != w || prediction->height() != h)) {
        throw ContractError("render_overlay: prediction extent does not match image");
    }
    if (prompts) validate_prompts(*prompts, w, h);

    RgbImage out = to_rgb8(scene.image);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!scene.mask.at(x, y)) continue;
            auto p = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) p[c] = blend(p[c], style.gt_tint[c], style.gt_alpha);
            out.set_pixel(x, y, p);
        }
    }
    if (prompts && prompts->mask) {
        const auto& m = prompts->mask->raster;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!m.at(x, y)) continue;
                auto p = out.pixel(x, y);
                for (int c = 0; c < 3; ++c) p[c] = blend(p[c], style.mask_prompt[c], 0.5);
                out.set_pixel(x, y, p);
            }
        }
    }
    if (prediction) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!prediction->at(x, y)) continue;
                const bool boundary = !prediction->get_or_zero(x - 1, y) ||
                                      !prediction->get_or_zero(x + 1, y) ||
                                      !prediction->get_or_zero(x, y - 1) ||
                                      !prediction->get_or_zero(x, y + 1);
                if (boundary) out.set_pixel(x, y, style.prediction);
            }
        }
    }
    if (prompts && prompts->box) {
        const auto& b = *prompts->box;
        for (int x = b.x_min; x <= b.x_max; ++x) {
            out.set_pixel(x, b.y_min, style.box);
            out.set_pixel(x, b.y_max, style.box);
        }
        for (int y = b.y_min; y <= b.y_max; ++y) {
            out.set_pixel(b.x_min, y, style.box);
            out.set_pixel(b.x_max, y, style.box);
        }
    }
    if (prompts && prompts->points) {
        const int r = style.point_radius;
        for (const auto& pt : prompts->points->points) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int x = pt.x + dx, y = pt.y + dy;
                    if (x >= 0 && y >= 0 && x < w && y < h) out.set_pixel(x, y, style.point);
                }
            }
        }
    }
    return out;
}

void SynthConfig::validate() const {
    if (count < 0) throw ContractError("SynthConfig: count must be >= 0");
    if (size < 16) throw ContractError("SynthConfig: size must be >= 16");
    if (blob_min < 1 || blob_min > blob_max) {
        throw ContractError("SynthConfig: blob count range must satisfy 1 <= min <= max");
    }
    if (!(noise_std >= 0.0)) throw ContractError("SynthConfig: noise_std must be >= 0");
}

namespace {

void paint_ellipse(BinaryMask& m, Rng& rng) {
    const int n = m.width();
    const double cx = rng.uniform(0.0, n);
    const double cy = rng.uniform(0.0, n);
    const double rx = rng.uniform(0.08, 0.25) * n;
    const double ry = rng.uniform(0.08, 0.25) * n;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double u = (c * dx + s * dy) / rx;
            const double v = (-s * dx + c * dy) / ry;
            if (u * u + v * v <= 1.0) m.set(x, y, true);
        }
    }
}

void paint_random_walk(BinaryMask& m, Rng& rng) {
    const int n = m.width();
    int x = static_cast<int>(rng.uniform_int(n / 8, n - 1 - n / 8));
    int y = static_cast<int>(rng.uniform_int(n / 8, n - 1 - n / 8));
    const int steps = static_cast<int>(rng.uniform_int(n, 3 * n));
    for (int i = 0; i < steps; ++i) {
        const int r = static_cast<int>(rng.uniform_int(1, 2));
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                if (dx * dx + dy * dy <= r * r && m.in_bounds(x + dx, y + dy)) m.set(x + dx, y + dy, true);
            }
        }
        x = std::clamp(x + static_cast<int>(rng.uniform_int(-1, 1)), 0, n - 1);
        y = std::clamp(y + static_cast<int>(rng.uniform_int(-1, 1)), 0, n - 1);
    }
}

constexpr double kWater[3] = {0.12, 0.28, 0.52};
constexpr double kLand[3] = {0.46, 0.50, 0.32};

} // namespace

std::vector<Scene> gen_synthetic_dataset(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(cfg.count));
    const double total = static_cast<double>(cfg.size) * cfg.size;
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        BinaryMask mask;
        // Redraw until the foreground fraction is in (0, 0.9).
        do {
            mask = BinaryMask(cfg.size, cfg.size);
            const auto blobs = rng.uniform_int(cfg.blob_min, cfg.blob_max);
            for (std::int64_t b = 0; b < blobs; ++b) {
                if (rng.uniform() < 0.5) {
                    paint_ellipse(mask, rng);
                } else {
                    paint_random_walk(mask, rng);
                }
            }
        } while (mask.count() == 0 || mask.count() >= 0.9 * total);

        Image img(cfg.size, cfg.size);
        const double brightness = rng.uniform(-0.08, 0.08);
        for (int y = 0; y < cfg.size; ++y) {
            for (int x = 0; x < cfg.size; ++x) {
                const double* base = mask.at(x, y) ? kWater : kLand;
                for (int c = 0; c < 3; ++c) {
                    const double v = base[c] + brightness + cfg.noise_std * rng.normal();
                    img.at(c, x, y) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        char id[32];
        std::snprintf(id, sizeof(id), "scene_%04d", i);
        scenes.push_back({std::move(img), std::move(mask), id});
    }
    return scenes;
}

void save_scene(const Scene& scene, const fs::path& dir) {
    save_image(scene.image, dir / (scene.id + ".img.png"));
    save_mask(scene.mask, dir / (scene.id + ".mask.png"));
}

std::vector<Scene> load_dataset_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::map<std::string, fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        const std::string suffix = ".img.png";
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            images[name.substr(0, name.size() - suffix.size())] = entry.path();
        }
    }
    std::vector<Scene> scenes;
    for (const auto& [id, img_path] : images) {
        const auto mask_path = dir / (id + ".mask.png");
        if (!fs::exists(mask_path)) throw IoError("missing mask for scene " + id + ": " + mask_path.string());
        Scene s{load_image(img_path), load_mask(mask_path), id};
        if (s.image.width != s.mask.width() || s.image.height != s.mask.height()) {
            throw FormatError("scene " + id + ": image and mask extents differ");
        }
        scenes.push_back(std::move(s));
    }
    return scenes;
}

} // namespace leprompter
