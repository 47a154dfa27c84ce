#include "snella/autodiff/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace snella::ad {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw std::invalid_argument("tensor shape " + shape_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
        if (row.size() != n) throw std::invalid_argument("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(what) + ": expected a matrix, got shape " + shape_string(t.shape()));
    }
}

}  // namespace snella::ad
