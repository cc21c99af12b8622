#pragma once

#include <cstdint>
#include <vector>

#include "leprompter/mask.hpp"

namespace leprompter {

/// Flat binary kernel with odd extents; the anchor is the center.
class StructuringElement {
  public:
    StructuringElement(int width, int height, std::vector<std::uint8_t> data);

    static StructuringElement square(int size);
    static StructuringElement cross(int size);

    int width() const { return width_; }
    int height() const { return height_; }
    int anchor_x() const { return (width_ - 1) / 2; }
    int anchor_y() const { return (height_ - 1) / 2; }
    bool at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    /// Offsets (relative to the anchor) of every set element.
    const std::vector<Pixel>& offsets() const { return offsets_; }

  private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
    std::vector<Pixel> offsets_;
};

struct Contour {
    std::vector<Pixel> points;
    bool closed = true;
};

// Out-of-bounds pixels count as background for both operations.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se, int iterations = 1);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se, int iterations = 1);
/// Dilation followed by erosion, one iteration each.
BinaryMask close(const BinaryMask& mask, const StructuringElement& se);

/// One outer contour per 8-connected component (Moore neighbor tracing with
/// Jacob's stopping criterion), ordered by each component's first
/// row-major pixel. Holes are not traced.
std::vector<Contour> trace_contours(const BinaryMask& mask);

/// Rasterizes the contours and fills every pixel not 4-reachable from the
/// image border through background.
BinaryMask fill_contours(const std::vector<Contour>& contours, int width, int height);

/// Background pixels not 4-reachable from the image border.
BinaryMask enclosed_background(const BinaryMask& mask);

/// 8-connected component labels (-1 for background), numbered in row-major
/// order of first pixel.
std::vector<int> label_components(const BinaryMask& mask, int& count);

} // namespace leprompter
