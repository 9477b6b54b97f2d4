#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pssgm/error.hpp"

namespace pssgm {

/// Oscillator displacements x in R^N, model units.
using StateVector = std::vector<double>;

/// Row-major M x N matrix of states; one sample per row.
class SampleMatrix {
public:
    SampleMatrix() = default;
    SampleMatrix(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0) {}
    SampleMatrix(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
        if (dim_ == 0 || data_.size() % dim_ != 0) {
            throw Error(ErrorKind::dimension_mismatch, "sample data length is not a multiple of dim");
        }
    }

    std::size_t rows() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

    void push_back(std::span<const double> x) {
        if (dim_ == 0) dim_ = x.size();
        if (x.size() != dim_) {
            throw Error(ErrorKind::dimension_mismatch, "row length differs from matrix dim");
        }
        data_.insert(data_.end(), x.begin(), x.end());
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const SampleMatrix&, const SampleMatrix&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

}  // namespace pssgm
