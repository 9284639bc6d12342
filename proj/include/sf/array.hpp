#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace sf {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major array of 64-bit floats. Rank 0 with one element is a scalar.
// The shape is fixed at construction; data is mutable.
class Array {
public:
    Array() = default;

    explicit Array(Shape shape);                            // zero-filled
    Array(Shape shape, std::vector<double> data);
    Array(Shape shape, double fill);

    static Array scalar(double v);
    static Array zeros(Shape shape) { return Array(std::move(shape)); }
    static Array full(Shape shape, double v) { return Array(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    bool is_scalar() const { return data_.size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double item() const;                                    // scalar value, throws otherwise
    void fill(double v);
    bool all_finite() const;

    // Same data, new shape (element count must match).
    Array reshaped(Shape shape) const;

    bool same_shape(const Array& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const Shape& s);

}  // namespace sf
