#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltsm {

/// Dense row-major matrix of doubles. The single numeric container used
/// throughout the library; vectors are 1×n or n×1 matrices.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Mat: negative dimension");
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        int r = static_cast<int>(rows.size());
        int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        Mat m(r, c);
        int i = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c)
                throw std::invalid_argument("Mat::from_rows: ragged rows");
            int j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void set_zero() { fill(0.0); }

    Mat reshaped(int r, int c) const {
        if (static_cast<std::size_t>(r) * c != size())
            throw std::invalid_argument("Mat::reshaped: element count mismatch");
        Mat out = *this;
        out.rows_ = r;
        out.cols_ = c;
        return out;
    }

    /// Exact element-by-element equality (bitwise for finite values).
    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }
    friend bool operator!=(const Mat& a, const Mat& b) { return !(a == b); }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

inline Mat& operator+=(Mat& a, const Mat& b) {
    check_same_shape(a, b, "Mat operator+=");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline Mat& operator-=(Mat& a, const Mat& b) {
    check_same_shape(a, b, "Mat operator-=");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

inline Mat operator+(const Mat& a, const Mat& b) {
    check_same_shape(a, b, "Mat operator+");
    Mat out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Mat operator-(const Mat& a, const Mat& b) {
    check_same_shape(a, b, "Mat operator-");
    Mat out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Mat operator*(const Mat& a, double c) {
    Mat out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}
inline Mat operator*(double c, const Mat& a) { return a * c; }

inline Mat hadamard(const Mat& a, const Mat& b) {
    check_same_shape(a, b, "hadamard");
    Mat out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline double sq_norm(const Mat& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

inline double sum_all(const Mat& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

inline double max_abs(const Mat& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i]));
    return s;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    check_same_shape(a, b, "max_abs_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

inline bool all_finite(const Mat& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace ltsm
