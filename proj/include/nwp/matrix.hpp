#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nwp/error.hpp"
#include "nwp/rng.hpp"

namespace nwp {

// Dense row-major matrix. Values are expected to stay finite through every
// public operation; shape mismatches throw ShapeError.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> data; // rows * cols, row-major

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {
        if (r < 0 || c < 0) throw ShapeError("Mat: negative dimension");
    }
    Mat(int r, int c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
            throw ShapeError("Mat: data length does not match rows*cols");
    }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    T* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    T operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    void copy_column(int c, std::span<T> out) const {
        for (int r = 0; r < rows; ++r) out[r] = (*this)(r, c);
    }
    void add_to_column(int c, std::span<const T> delta) {
        for (int r = 0; r < rows; ++r) (*this)(r, c) += delta[r];
    }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using Matrix = Mat<float>;

template <typename T>
bool all_finite(const Mat<T>& m) {
    for (T v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
bool all_finite(std::span<const T> v) {
    for (T x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Dot product with 16 interleaved partial sums: lane j accumulates the terms
// with index == j (mod 16), lanes are then combined left to right. The order
// is fixed, so results are reproducible run to run, and the independent
// accumulator chains vectorize without reassociation.
template <typename T>
T dot_span(const T* a, const T* b, int n) {
    constexpr int kLanes = 16;
    T acc[kLanes] = {};
    int k = 0;
    for (; k + kLanes <= n; k += kLanes)
        for (int j = 0; j < kLanes; ++j) acc[j] += a[k + j] * b[k + j];
    for (int j = 0; k + j < n; ++j) acc[j] += a[k + j] * b[k + j];
    T s = 0;
    for (int j = 0; j < kLanes; ++j) s += acc[j];
    return s;
}

// C += A * B. Each output element accumulates over k in ascending order.
template <typename T>
void gemm_nn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw ShapeError("gemm_nn: shape mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    for (int i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const T aik = arow[k];
            const T* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C += A * B^T (rows of A dotted with rows of B; see dot_span for the order).
template <typename T>
void gemm_nt(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw ShapeError("gemm_nt: shape mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) crow[j] += dot_span(arow, b.row(j), a.cols);
    }
}

// C += A^T * B. Accumulates rank-1 updates over A's rows in ascending order.
template <typename T>
void gemm_tn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("gemm_tn: shape mismatch");
    for (int k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const T aki = arow[i];
            T* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

// Standard product, C = A * B.
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ: " + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows));
    Mat<T> c(a.rows, b.cols);
    gemm_nn(c, a, b);
    return c;
}

// y = A * x
template <typename T>
void matvec(const Mat<T>& a, std::span<const T> x, std::span<T> y) {
    if (static_cast<int>(x.size()) != a.cols || static_cast<int>(y.size()) != a.rows)
        throw ShapeError("matvec: shape mismatch");
    for (int i = 0; i < a.rows; ++i) y[i] = dot_span(a.row(i), x.data(), a.cols);
}

// y = A^T * x
template <typename T>
void matvec_t(const Mat<T>& a, std::span<const T> x, std::span<T> y) {
    if (static_cast<int>(x.size()) != a.rows || static_cast<int>(y.size()) != a.cols)
        throw ShapeError("matvec_t: shape mismatch");
    std::fill(y.begin(), y.end(), T(0));
    for (int i = 0; i < a.rows; ++i) {
        const T xi = x[i];
        const T* arow = a.row(i);
        for (int j = 0; j < a.cols; ++j) y[j] += xi * arow[j];
    }
}

template <typename T>
double frobenius_norm(const Mat<T>& m) {
    double s = 0;
    for (T v : m.data) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

template <typename T>
void fill_uniform(Mat<T>& m, Rng& rng, T lo, T hi) {
    if (!(lo < hi)) throw RangeError("fill_uniform: lo must be < hi");
    const T width = hi - lo;
    for (T& v : m.data) {
        v = lo + width * static_cast<T>(rng.next_double());
        if (v >= hi) v = std::nextafter(hi, lo); // float rounding guard at the open end
    }
}

// Reproducible uniform matrix in [lo, hi).
inline Matrix seeded_uniform(Rng& rng, int rows, int cols, float lo, float hi) {
    Matrix m(rows, cols);
    fill_uniform(m, rng, lo, hi);
    return m;
}

} // namespace nwp
