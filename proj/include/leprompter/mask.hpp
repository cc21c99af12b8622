#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "leprompter/error.hpp"

namespace leprompter {

struct Pixel {
    int x = 0;
    int y = 0;
    friend bool operator==(Pixel, Pixel) = default;
};

/// Row-major W×H grid of {0,1}.
class BinaryMask {
  public:
    BinaryMask() = default;
    BinaryMask(int width, int height);
    BinaryMask(int width, int height, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty_extent() const { return data_.empty(); }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::uint8_t at(int x, int y) const { return data_[index(x, y)]; }
    void set(int x, int y, bool v) { data_[index(x, y)] = v ? 1 : 0; }
    /// Out-of-bounds reads return 0.
    std::uint8_t get_or_zero(int x, int y) const { return in_bounds(x, y) ? at(x, y) : 0; }

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::size_t count() const;
    bool same_extent(const BinaryMask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    BinaryMask complement() const;
    /// Every foreground pixel of `this` is also foreground in `other`.
    bool subset_of(const BinaryMask& other) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

  private:
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

} // namespace leprompter
