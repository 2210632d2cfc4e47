#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgsr {

// Dense row-major tensor of doubles. Images are CHW, batches NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != numel_of(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // CHW access
    double& at3(int c, int h, int w) {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    double at3(int c, int h, int w) const {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    // NCHW access
    double& at4(int n, int c, int h, int w) {
        return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    double at4(int n, int c, int h, int w) const {
        return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<int> shape) const {
        if (numel_of(shape) != numel())
            throw std::invalid_argument("Tensor: reshape changes element count");
        return Tensor(std::move(shape), data_);
    }

    static std::int64_t numel_of(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace fgsr
