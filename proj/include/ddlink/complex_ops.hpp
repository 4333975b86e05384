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

#include "ddlink/cmatrix.hpp"
#include "ddlink/tensor.hpp"

namespace ddlink::ad {

/// Complex matrix represented as a real/imaginary tensor pair. All complex
/// arithmetic reduces to compositions of real tensor operations, so anything
/// built from CMat stays differentiable end to end.
struct CMat {
    Tensor re;
    Tensor im;

    CMat() = default;
    CMat(Tensor r, Tensor i) : re(std::move(r)), im(std::move(i)) {
        if (re.shape() != im.shape())
            throw ShapeError("CMat real/imaginary shapes differ: " + shape_str(re.shape()) +
                             " vs " + shape_str(im.shape()));
        if (re.rank() != 2) throw ShapeError("CMat requires rank-2 tensors");
    }

    int rows() const { return re.dim(0); }
    int cols() const { return re.dim(1); }
};

/// Detached CMat from a plain complex matrix.
inline CMat cmat_const(const CMatrix& m) {
    std::vector<double> re(static_cast<std::size_t>(m.rows()) * m.cols());
    std::vector<double> im(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) {
        re[i] = m.data()[i].real();
        im[i] = m.data()[i].imag();
    }
    Shape s{m.rows(), m.cols()};
    return CMat(Tensor(s, std::move(re)), Tensor(s, std::move(im)));
}

/// Values of a CMat as a plain complex matrix (gradient link dropped).
inline CMatrix to_cmatrix(const CMat& m) {
    CMatrix out(m.rows(), m.cols());
    const auto& re = m.re.values();
    const auto& im = m.im.values();
    for (std::size_t i = 0; i < re.size(); ++i) out.data()[i] = {re[i], im[i]};
    return out;
}

inline CMat cadd(const CMat& a, const CMat& b) { return CMat(add(a.re, b.re), add(a.im, b.im)); }
inline CMat csub(const CMat& a, const CMat& b) { return CMat(sub(a.re, b.re), sub(a.im, b.im)); }
inline CMat cscale(const CMat& a, double c) { return CMat(scale(a.re, c), scale(a.im, c)); }

/// (a.re + j a.im)(b.re + j b.im) = (re*re - im*im) + j(re*im + im*re)
inline CMat cmatmul(const CMat& a, const CMat& b) {
    Tensor rr = matmul(a.re, b.re);
    Tensor ii = matmul(a.im, b.im);
    Tensor ri = matmul(a.re, b.im);
    Tensor ir = matmul(a.im, b.re);
    return CMat(sub(rr, ii), add(ri, ir));
}

inline CMat cadjoint(const CMat& a) { return CMat(transpose(a.re), neg(transpose(a.im))); }

/// a + c * I, c real.
inline CMat cadd_scaled_identity(const CMat& a, double c) {
    if (a.rows() != a.cols()) throw ShapeError("cadd_scaled_identity requires a square CMat");
    const int n = a.rows();
    std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = c;
    return CMat(add(a.re, Tensor(Shape{n, n}, std::move(eye))), a.im);
}

inline CMat cinverse(const CMat& a) {
    if (a.rows() != a.cols()) throw ShapeError("cinverse requires a square CMat");
    Tensor packed = stack_pair(a.re, a.im);
    Tensor inv = complex_inverse_packed(packed);
    return CMat(take_plane(inv, 0), take_plane(inv, 1));
}

/// Squared magnitudes |a_ij|^2 as a real tensor.
inline Tensor cabs2(const CMat& a) { return add(mul(a.re, a.re), mul(a.im, a.im)); }

/// Row sums of |a_ij|^2 as an n-by-1 column.
inline Tensor row_abs2_sums(const CMat& a) {
    return matmul(cabs2(a), Tensor::full(Shape{a.cols(), 1}, 1.0));
}

/// |a_kk|^2 as an n-by-1 column.
inline Tensor diag_abs2(const CMat& a) { return diag_part(cabs2(a)); }

} // namespace ddlink::ad
