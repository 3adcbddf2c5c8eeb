#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace emocvae {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 as convenient.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), 0.0) {}
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
        assert(a.size() == size_t(r) * size_t(c));
    }

    static Mat row_vector(const std::vector<double>& v) {
        return Mat(1, int(v.size()), v);
    }

    double* row(int r) { return a.data() + size_t(r) * size_t(cols); }
    const double* row(int r) const { return a.data() + size_t(r) * size_t(cols); }
    double& at(int r, int c) { return a[size_t(r) * size_t(cols) + size_t(c)]; }
    double at(int r, int c) const { return a[size_t(r) * size_t(cols) + size_t(c)]; }
    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }
    bool all_finite() const {
        for (double x : a)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// out += A * B
inline void matmul_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.rows && out.rows == A.rows && out.cols == B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < A.cols; ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = B.row(k);
            for (int j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

// out += A * B^T
inline void matmul_nt_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.cols == B.cols && out.rows == A.rows && out.cols == B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* brow = B.row(j);
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            orow[j] += s;
        }
    }
}

// out += A^T * B
inline void matmul_tn_acc(const Mat& A, const Mat& B, Mat& out) {
    assert(A.rows == B.rows && out.rows == A.cols && out.cols == B.cols);
    for (int k = 0; k < A.rows; ++k) {
        const double* arow = A.row(k);
        const double* brow = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row(i);
            for (int j = 0; j < B.cols; ++j) orow[j] += aki * brow[j];
        }
    }
}

inline Mat matmul(const Mat& A, const Mat& B) {
    Mat out(A.rows, B.cols);
    matmul_acc(A, B, out);
    return out;
}

inline Mat matmul_nt(const Mat& A, const Mat& B) {
    Mat out(A.rows, B.rows);
    matmul_nt_acc(A, B, out);
    return out;
}

inline void add_inplace(Mat& dst, const Mat& src, double scale = 1.0) {
    assert(dst.same_shape(src));
    for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += scale * src.a[i];
}

}  // namespace emocvae
