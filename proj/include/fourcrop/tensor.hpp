#pragma once

#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fourcrop/errors.hpp"

namespace fourcrop {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major tensor. Image order is NxHxWxC.
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] < 1) {
                throw ShapeError("tensor axis " + std::to_string(i) + " has extent 0 in " +
                                 shape_str(shape_));
            }
        }
        data_.assign(numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    const Shape& shape() const { return shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // NxHxWxC addressing
    std::size_t idx4(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
        return ((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
    }
    T& at4(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
        return data_[idx4(n, h, w, c)];
    }
    const T& at4(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
        return data_[idx4(n, h, w, c)];
    }

    // row-major matrix addressing
    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(T v) { data_.assign(data_.size(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(Shape s) const {
        if (numel(s) != data_.size()) {
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                             " changes element count");
        }
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

inline void require_axis(bool ok, const std::string& axis, const std::string& detail) {
    if (!ok) throw ShapeError("axis '" + axis + "': " + detail);
}

// FCN_CHECK_FINITE=1 turns on NaN/Inf sweeps after every kernel.
inline bool finite_checks_enabled() {
    static const bool on = [] {
        const char* v = std::getenv("FCN_CHECK_FINITE");
        return v != nullptr && v[0] == '1';
    }();
    return on;
}

template <class T>
void check_finite(const Tensor<T>& t, const char* where) {
    if (!finite_checks_enabled()) return;
    const T* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(static_cast<double>(p[i]))) {
            throw NumericalError(std::string("non-finite value after ") + where + " at flat index " +
                                 std::to_string(i));
        }
    }
}

} // namespace fourcrop
