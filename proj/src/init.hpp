#pragma once

#include <cmath>

#include "leprompter/rng.hpp"
#include "leprompter/tensor.hpp"

namespace leprompter::detail {

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

inline Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = stddev * rng.normal();
    return t;
}

/// He-uniform bound for a layer with the given fan-in.
inline double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
/// Default bound for linear layers (1/sqrt(fan_in)).
inline double linear_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

} // namespace leprompter::detail
