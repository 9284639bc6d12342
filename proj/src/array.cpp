#include "sf/array.hpp"

#include <cmath>
#include <sstream>

#include "sf/errors.hpp"

namespace sf {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Array::Array(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        fail("diffcore", "array shape " + shape_str(shape_) + " does not match data length " +
                             std::to_string(data_.size()));
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Array Array::scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

double Array::item() const {
    if (data_.size() != 1) fail("diffcore", "item() on non-scalar array " + shape_str(shape_));
    return data_[0];
}

void Array::fill(double v) {
    for (double& x : data_) x = v;
}

bool Array::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Array Array::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        fail("diffcore", "reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                             " changes element count");
    return Array(std::move(shape), data_);
}

}  // namespace sf
