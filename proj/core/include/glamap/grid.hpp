#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace glamap {

/// Row-major 2-D grid. The workhorse container for label masks, nodata
/// masks, DEMs and other single-band rasters.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative extent");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

    T at_checked(int r, int c) const {
        if (!in_bounds(r, c)) throw std::out_of_range("Grid: index out of bounds");
        return (*this)(r, c);
    }

    bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    std::vector<T>& raw() { return v_; }
    const std::vector<T>& raw() const { return v_; }

    void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

    bool operator==(const Grid& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> v_;
};

using MaskGrid = Grid<uint8_t>;

}  // namespace glamap
