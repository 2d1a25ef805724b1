#include "tprn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tprn {

Matrix outer(const Vector& u, const Vector& v) {
    Matrix m(u.size(), v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double vj = v[j];
        for (std::size_t i = 0; i < u.size(); ++i) m(i, j) = u[i] * vj;
    }
    return m;
}

Vector vectorize(const Matrix& m) { return m.data(); }

Matrix reshape(const Vector& v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols)
        throw ConfigError("reshape: element count " + std::to_string(v.size()) +
                          " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    return Matrix(rows, cols, v);
}

double sigmoidScalar(double x) {
    const double z = std::clamp(x, -36.0, 36.0);
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Vector sigmoid(const Vector& x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoidScalar(x[i]);
    return out;
}

double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size())
        throw ConfigError("cosine: length mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu == 0.0 || nv == 0.0)
        throw DegenerateInputError("cosine: zero-norm argument");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vector l2Normalize(const Vector& v) {
    const double n = norm2(v);
    if (n == 0.0)
        throw DegenerateInputError("l2Normalize: zero vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
    if (w.cols() != x.size() || w.rows() != b.size())
        throw ConfigError("affine: dimension mismatch (" + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()) + " vs x:" + std::to_string(x.size()) +
                          " b:" + std::to_string(b.size()) + ")");
    Vector out = b;
    for (std::size_t j = 0; j < w.cols(); ++j) {
        const double xj = x[j];
        for (std::size_t i = 0; i < w.rows(); ++i) out[i] += w(i, j) * xj;
    }
    return out;
}

double dot(const Vector& u, const Vector& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

Vector matvec(const Matrix& w, const Vector& x) {
    if (w.cols() != x.size())
        throw ConfigError("matvec: dimension mismatch");
    Vector out(w.rows(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
        const double xj = x[j];
        for (std::size_t i = 0; i < w.rows(); ++i) out[i] += w(i, j) * xj;
    }
    return out;
}

Vector matTvec(const Matrix& w, const Vector& y) {
    if (w.rows() != y.size())
        throw ConfigError("matTvec: dimension mismatch");
    Vector out(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) s += w(i, j) * y[i];
        out[j] = s;
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ConfigError("matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double bkj = b(k, j);
            if (bkj == 0.0) continue;
            for (std::size_t i = 0; i < a.rows(); ++i) c(i, j) += a(i, k) * bkj;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) t(j, i) = a(i, j);
    return t;
}

void addScaled(Vector& acc, const Vector& x, double s) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * x[i];
}

void addOuterScaled(Matrix& acc, const Vector& u, const Vector& v, double s) {
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double svj = s * v[j];
        for (std::size_t i = 0; i < u.size(); ++i) acc(i, j) += u[i] * svj;
    }
}

double maxAbs(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double maxAbsDiff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

bool allFinite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool allFinite(const Matrix& m) { return allFinite(m.data()); }

}  // namespace tprn
