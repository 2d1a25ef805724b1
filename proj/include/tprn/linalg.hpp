#pragma once

#include <cstddef>
#include <vector>

#include "tprn/errors.hpp"

namespace tprn {

using Vector = std::vector<double>;

// Dense real matrix with column-major storage. vectorize() returns the raw
// storage order, so reshape(vectorize(M), m, n) round-trips exactly. The
// column-major convention is load-bearing: the recurrent inputs and the
// checkpoint layout both use it.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, Vector colMajor)
        : rows_(rows), cols_(cols), data_(std::move(colMajor)) {
        if (data_.size() != rows_ * cols_)
            throw ConfigError("Matrix: storage size does not match shape");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    bool sameShape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Vector column(std::size_t j) const {
        Vector c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

// rank-1 product u v^T
Matrix outer(const Vector& u, const Vector& v);

// column-stacking (matches storage order)
Vector vectorize(const Matrix& m);
Matrix reshape(const Vector& v, std::size_t rows, std::size_t cols);

// logistic, elementwise; inputs clamped to [-36, 36] so outputs stay
// strictly inside (0, 1) in double precision
double sigmoidScalar(double x);
Vector sigmoid(const Vector& x);

// throws DegenerateInputError on a zero-norm argument
double cosine(const Vector& u, const Vector& v);
Vector l2Normalize(const Vector& v);

// W x + b; dimension mismatch throws ConfigError
Vector affine(const Matrix& w, const Vector& x, const Vector& b);

double dot(const Vector& u, const Vector& v);
double norm2(const Vector& v);
Vector matvec(const Matrix& w, const Vector& x);
Vector matTvec(const Matrix& w, const Vector& y);  // W^T y
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

void addScaled(Vector& acc, const Vector& x, double s);          // acc += s*x
void addOuterScaled(Matrix& acc, const Vector& u, const Vector& v, double s);  // acc += s*u*v^T

double maxAbs(const Vector& v);
double maxAbsDiff(const Matrix& a, const Matrix& b);

bool allFinite(const Vector& v);
bool allFinite(const Matrix& m);

}  // namespace tprn
