#include "leprompter/morphology.hpp"

#include <array>
#include <string>

namespace leprompter {

StructuringElement::StructuringElement(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 || width % 2 == 0 || height % 2 == 0) {
        throw ContractError("StructuringElement: extents must be odd, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        throw ContractError("StructuringElement: data length does not match extents");
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (at(x, y)) offsets_.push_back({x - anchor_x(), y - anchor_y()});
        }
    }
    if (offsets_.empty()) throw ContractError("StructuringElement: needs at least one set element");
}

StructuringElement StructuringElement::square(int size) {
    return {size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 1)};
}

StructuringElement StructuringElement::cross(int size) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(size) * size, 0);
    const int c = (size - 1) / 2;
    for (int i = 0; i < size; ++i) {
        data[static_cast<std::size_t>(c) * size + i] = 1;
        data[static_cast<std::size_t>(i) * size + c] = 1;
    }
    return {size, size, std::move(data)};
}

namespace {

BinaryMask dilate_once(const BinaryMask& m, const StructuringElement& se) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            for (const auto& o : se.offsets()) {
                if (m.get_or_zero(x + o.x, y + o.y)) {
                    out.set(x, y, true);
                    break;
                }
            }
        }
    }
    return out;
}

BinaryMask erode_once(const BinaryMask& m, const StructuringElement& se) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool fits = true;
            for (const auto& o : se.offsets()) {
                if (!m.get_or_zero(x + o.x, y + o.y)) {
                    fits = false;
                    break;
                }
            }
            out.set(x, y, fits);
        }
    }
    return out;
}

void check_iterations(int iterations) {
    if (iterations < 1) throw ContractError("morphology: iterations must be >= 1");
}

// Clockwise in image coordinates (y grows downward), starting east.
constexpr std::array<Pixel, 8> kDirs{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

int direction_of(Pixel from, Pixel to) {
    for (int d = 0; d < 8; ++d) {
        if (from.x + kDirs[d].x == to.x && from.y + kDirs[d].y == to.y) return d;
    }
    return -1;
}

Contour trace_one(const BinaryMask& m, Pixel start) {
    Contour c;
    c.points.push_back(start);
    // The west neighbor of a component's first row-major pixel is background.
    auto find_next = [&](Pixel p, int backtrack, int& found_dir) {
        for (int i = 1; i <= 8; ++i) {
            const int d = (backtrack + i) % 8;
            if (m.get_or_zero(p.x + kDirs[d].x, p.y + kDirs[d].y)) {
                found_dir = d;
                return true;
            }
        }
        return false;
    };
    int first_dir = -1;
    if (!find_next(start, 4, first_dir)) return c; // isolated pixel

    Pixel p = start;
    int d = first_dir;
    while (true) {
        const Pixel next{p.x + kDirs[d].x, p.y + kDirs[d].y};
        const Pixel checked{p.x + kDirs[(d + 7) % 8].x, p.y + kDirs[(d + 7) % 8].y};
        const int backtrack = direction_of(next, checked);
        p = next;
        int nd = -1;
        find_next(p, backtrack, nd);
        if (p == start && nd == first_dir) break;
        c.points.push_back(p);
        d = nd;
    }
    return c;
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se, int iterations) {
    check_iterations(iterations);
    BinaryMask out = dilate_once(mask, se);
    for (int i = 1; i < iterations; ++i) out = dilate_once(out, se);
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se, int iterations) {
    check_iterations(iterations);
    BinaryMask out = erode_once(mask, se);
    for (int i = 1; i < iterations; ++i) out = erode_once(out, se);
    return out;
}

BinaryMask close(const BinaryMask& mask, const StructuringElement& se) {
    return erode_once(dilate_once(mask, se), se);
}

std::vector<int> label_components(const BinaryMask& mask, int& count) {
    const int w = mask.width(), h = mask.height();
    std::vector<int> label(mask.size(), -1);
    count = 0;
    std::vector<Pixel> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
            const int l = count++;
            label[static_cast<std::size_t>(y) * w + x] = l;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                for (const auto& d : kDirs) {
                    const int nx = p.x + d.x, ny = p.y + d.y;
                    if (!mask.get_or_zero(nx, ny)) continue;
                    auto& ln = label[static_cast<std::size_t>(ny) * w + nx];
                    if (ln < 0) {
                        ln = l;
                        stack.push_back({nx, ny});
                    }
                }
            }
        }
    }
    return label;
}

std::vector<Contour> trace_contours(const BinaryMask& mask) {
    int count = 0;
    const auto label = label_components(mask, count);
    std::vector<Contour> contours;
    contours.reserve(static_cast<std::size_t>(count));
    int next = 0;
    for (int y = 0; y < mask.height() && next < count; ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (label[static_cast<std::size_t>(y) * mask.width() + x] == next) {
                contours.push_back(trace_one(mask, {x, y}));
                ++next;
            }
        }
    }
    return contours;
}

BinaryMask enclosed_background(const BinaryMask& mask) {
    const int w = mask.width(), h = mask.height();
    BinaryMask reached(w, h);
    std::vector<Pixel> stack;
    auto seed = [&](int x, int y) {
        if (!mask.at(x, y) && !reached.at(x, y)) {
            reached.set(x, y, true);
            stack.push_back({x, y});
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    constexpr std::array<Pixel, 4> kFour{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        for (const auto& d : kFour) {
            const int nx = p.x + d.x, ny = p.y + d.y;
            if (mask.in_bounds(nx, ny)) seed(nx, ny);
        }
    }
    BinaryMask enclosed(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) enclosed.set(x, y, !mask.at(x, y) && !reached.at(x, y));
    }
    return enclosed;
}

BinaryMask fill_contours(const std::vector<Contour>& contours, int width, int height) {
    BinaryMask out(width, height);
    for (const auto& c : contours) {
        for (const auto& p : c.points) {
            if (!out.in_bounds(p.x, p.y)) throw ContractError("fill_contours: contour point out of bounds");
            out.set(p.x, p.y, true);
        }
    }
    const auto holes = enclosed_background(out);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (holes.at(x, y)) out.set(x, y, true);
        }
    }
    return out;
}

} // namespace leprompter
