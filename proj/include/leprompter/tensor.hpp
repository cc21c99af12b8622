#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace leprompter {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    /// Index into a rank-2 or rank-3 tensor.
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data[(c * shape[1] + i) * shape[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data[(c * shape[1] + i) * shape[2] + j];
    }

    bool all_finite() const;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace leprompter
