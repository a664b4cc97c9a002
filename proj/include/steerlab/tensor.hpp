#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "steerlab/errors.hpp"

namespace steerlab {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    Vec col(std::size_t j) const {
        Vec v(rows);
        for (std::size_t i = 0; i < rows; ++i) v[i] = data[i * cols + j];
        return v;
    }

    void set_col(std::size_t j, const Vec& v) {
        for (std::size_t i = 0; i < rows; ++i) data[i * cols + j] = v[i];
    }

    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }
    double* row_ptr(std::size_t i) { return data.data() + i * cols; }

    bool operator==(const Mat& other) const = default;
};

inline Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimMismatch("dot of different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec scaled(const Vec& a, double c) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
    return r;
}

inline Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimMismatch("add of different lengths");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimMismatch("sub of different lengths");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

/// r += c * a
inline void axpy(double c, const Vec& a, Vec& r) {
    if (a.size() != r.size()) throw DimMismatch("axpy of different lengths");
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += c * a[i];
}

/// m * v
inline Vec matvec(const Mat& m, const Vec& v) {
    if (m.cols != v.size()) throw DimMismatch("matvec shape");
    Vec r(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * v[j];
        r[i] = s;
    }
    return r;
}

/// m^T * v
inline Vec matvec_t(const Mat& m, const Vec& v) {
    if (m.rows != v.size()) throw DimMismatch("matvec_t shape");
    Vec r(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        const double vi = v[i];
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += row[j] * vi;
    }
    return r;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw DimMismatch("matmul shape");
    Mat r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            double* rrow = r.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) rrow[j] += aik * brow[j];
        }
    }
    return r;
}

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

inline Vec normalized(const Vec& v) {
    double n = norm(v);
    if (n <= 0.0 || !std::isfinite(n)) throw ZeroVector("cannot normalize");
    return scaled(v, 1.0 / n);
}

}  // namespace steerlab
