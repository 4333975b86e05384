// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/errors.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace ddlink {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Dense complex matrix, row-major. This is the plain (non-differentiable)
/// numeric workhorse used by channel construction and Monte Carlo paths.
class CMatrix {
public:
    CMatrix() = default;
    CMatrix(int rows, int cols) : rows_(rows), cols_(cols), a_(check_dims(rows, cols)) {}
    CMatrix(int rows, int cols, CVec data) : rows_(rows), cols_(cols), a_(std::move(data)) {
        if (a_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw ShapeError("CMatrix data length does not match dimensions");
    }

    static CMatrix identity(int n) {
        CMatrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return a_.empty(); }

    cplx& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
    const cplx& operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * cols_ + c]; }

    const CVec& data() const { return a_; }
    CVec& data() { return a_; }

    CMatrix adjoint() const {
        CMatrix m(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                m(j, i) = std::conj((*this)(i, j));
        return m;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (const cplx& z : a_) s += std::norm(z);
        return std::sqrt(s);
    }

    CMatrix& operator+=(const CMatrix& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
        return *this;
    }
    CMatrix& operator-=(const CMatrix& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
        return *this;
    }
    CMatrix& operator*=(cplx s) {
        for (auto& z : a_) z *= s;
        return *this;
    }

    friend CMatrix operator+(CMatrix a, const CMatrix& b) { return a += b; }
    friend CMatrix operator-(CMatrix a, const CMatrix& b) { return a -= b; }
    friend CMatrix operator*(CMatrix a, cplx s) { return a *= s; }
    friend CMatrix operator*(cplx s, CMatrix a) { return a *= s; }

private:
    static CVec check_dims(int rows, int cols) {
        if (rows <= 0 || cols <= 0) throw ShapeError("CMatrix dimensions must be positive");
        return CVec(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    }
    void require_same(const CMatrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw ShapeError(std::string("CMatrix ") + op + ": dimension mismatch");
    }

    int rows_ = 0;
    int cols_ = 0;
    CVec a_;
};

inline CMatrix matmul(const CMatrix& a, const CMatrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("CMatrix matmul: inner dimensions disagree");
    CMatrix out(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const cplx aip = a(i, p);
            if (aip == cplx(0.0, 0.0)) continue;
            for (int j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
        }
    return out;
}

inline CVec matvec(const CMatrix& a, const CVec& x) {
    if (a.cols() != static_cast<int>(x.size())) throw ShapeError("CMatrix matvec: dimension mismatch");
    CVec y(static_cast<std::size_t>(a.rows()), cplx(0.0, 0.0));
    for (int i = 0; i < a.rows(); ++i) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < a.cols(); ++j) acc += a(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

/// Gauss-Jordan inverse with partial pivoting. Singularity tolerance is
/// 1e-12 times the max row 1-norm; the thrown error carries the failing
/// pivot index and magnitude.
inline CMatrix inverse(const CMatrix& a) {
    if (a.rows() != a.cols()) throw ShapeError("inverse requires a square matrix");
    const int n = a.rows();
    CMatrix work = a;
    CMatrix inv = CMatrix::identity(n);

    double max_row_norm = 0.0;
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::abs(work(r, j));
        max_row_norm = std::max(max_row_norm, s);
    }
    const double tol = 1e-12 * max_row_norm;

    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(work(col, col));
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(work(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best <= tol) throw SingularMatrixError(static_cast<std::size_t>(col), best);
        if (piv != col)
            for (int j = 0; j < n; ++j) {
                std::swap(work(piv, j), work(col, j));
                std::swap(inv(piv, j), inv(col, j));
            }
        const cplx pinv = 1.0 / work(col, col);
        for (int j = 0; j < n; ++j) {
            work(col, j) *= pinv;
            inv(col, j) *= pinv;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const cplx f = work(r, col);
            if (f == cplx(0.0, 0.0)) continue;
            for (int j = 0; j < n; ++j) {
                work(r, j) -= f * work(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

} // namespace ddlink
