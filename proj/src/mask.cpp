#include "leprompter/mask.hpp"

#include <algorithm>
#include <string>

namespace leprompter {

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw ContractError("BinaryMask: negative extent " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height, 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 || data_.size() != static_cast<std::size_t>(width) * height) {
        throw ContractError("BinaryMask: data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
        throw ContractError("BinaryMask: values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& v : out.data_) v = 1 - v;
    return out;
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
    if (!same_extent(other)) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i] && !other.data_[i]) return false;
    }
    return true;
}

} // namespace leprompter
