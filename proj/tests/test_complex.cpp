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

#include "ddlink/cmatrix.hpp"
#include "ddlink/complex_ops.hpp"

#include "gradcheck.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

using namespace ddlink;
using namespace ddlink::ad;

namespace {

CMatrix random_cmatrix(int rows, int cols, Rng& rng) {
    CMatrix m(rows, cols);
    for (auto& z : m.data()) z = rng.complex_gaussian(1.0);
    return m;
}

double max_entry_error(const CMatrix& a, const CMatrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

} // namespace

TEST_CASE("complex matmul with the identity is the identity map", "[complex]") {
    Rng rng(101);
    CMatrix b = random_cmatrix(4, 4, rng);
    CMat cb = cmat_const(b);
    CMat id = cmat_const(CMatrix::identity(4));
    CMatrix out = to_cmatrix(cmatmul(id, cb));
    REQUIRE(max_entry_error(out, b) == 0.0);
}

TEST_CASE("(jI)(jI) = -I", "[complex]") {
    const int n = 3;
    CMatrix ji(n, n);
    for (int i = 0; i < n; ++i) ji(i, i) = cplx(0.0, 1.0);
    CMat a = cmat_const(ji);
    CMatrix out = to_cmatrix(cmatmul(a, a));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            REQUIRE(std::abs(out(i, j) - (i == j ? cplx(-1.0, 0.0) : cplx(0.0, 0.0))) < 1e-15);
}

TEST_CASE("complex matmul matches scalar complex arithmetic", "[complex]") {
    Rng rng(103);
    CMatrix a = random_cmatrix(4, 4, rng);
    CMatrix b = random_cmatrix(4, 4, rng);
    // oracle: direct scalar complex multiply-accumulate
    CMatrix want(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            cplx acc(0.0, 0.0);
            for (int p = 0; p < 4; ++p) acc += a(i, p) * b(p, j);
            want(i, j) = acc;
        }
    CMatrix got_plain = matmul(a, b);
    CMatrix got_tensor = to_cmatrix(cmatmul(cmat_const(a), cmat_const(b)));
    REQUIRE(max_entry_error(got_plain, want) < 1e-12);
    REQUIRE(max_entry_error(got_tensor, want) < 1e-12);
}

TEST_CASE("inverse of 2I is 0.5I", "[complex]") {
    CMatrix a = CMatrix::identity(4);
    a *= cplx(2.0, 0.0);
    CMatrix inv_plain = inverse(a);
    CMatrix inv_tensor = to_cmatrix(cinverse(cmat_const(a)));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const cplx want = i == j ? cplx(0.5, 0.0) : cplx(0.0, 0.0);
            REQUIRE(std::abs(inv_plain(i, j) - want) < 1e-15);
            REQUIRE(std::abs(inv_tensor(i, j) - want) < 1e-15);
        }
}

TEST_CASE("inverse of diag(1, j) is diag(1, -j)", "[complex]") {
    CMatrix a(2, 2);
    a(0, 0) = cplx(1.0, 0.0);
    a(1, 1) = cplx(0.0, 1.0);
    CMatrix inv = to_cmatrix(cinverse(cmat_const(a)));
    REQUIRE(std::abs(inv(0, 0) - cplx(1.0, 0.0)) < 1e-15);
    REQUIRE(std::abs(inv(1, 1) - cplx(0.0, -1.0)) < 1e-15);
    REQUIRE(std::abs(inv(0, 1)) < 1e-15);
    REQUIRE(std::abs(inv(1, 0)) < 1e-15);
}

TEST_CASE("A inv(A) stays within 1e-10 of the identity up to 64x64", "[complex]") {
    Rng rng(107);
    for (int n : {4, 16, 64}) {
        CMatrix a = random_cmatrix(n, n, rng);
        CMatrix inv_a = inverse(a);
        // well-conditioned check via the Frobenius bound on the condition number
        const double cond_bound = a.frobenius_norm() * inv_a.frobenius_norm();
        REQUIRE(cond_bound < 1e4);
        CMatrix prod = matmul(a, inv_a);
        for (int i = 0; i < n; ++i) prod(i, i) -= 1.0;
        REQUIRE(prod.frobenius_norm() < 1e-10);

        CMatrix prod_t = matmul(a, to_cmatrix(cinverse(cmat_const(a))));
        for (int i = 0; i < n; ++i) prod_t(i, i) -= 1.0;
        REQUIRE(prod_t.frobenius_norm() < 1e-10);
    }
}

TEST_CASE("singular matrices raise an error carrying the pivot", "[complex]") {
    CMatrix a(3, 3);
    a(0, 0) = 1.0;
    a(1, 1) = 1.0; // column 2 is identically zero
    try {
        (void)inverse(a);
        FAIL("expected SingularMatrixError");
    } catch (const SingularMatrixError& e) {
        REQUIRE(e.pivot_index() == 2);
        REQUIRE(e.pivot_magnitude() == 0.0);
    }
    REQUIRE_THROWS_AS(cinverse(cmat_const(a)), SingularMatrixError);
}

TEST_CASE("gradient of sum |inv(A)|^2 matches finite differences", "[complex][gradcheck]") {
    Rng rng(109);
    const int n = 3;
    CMatrix a = random_cmatrix(n, n, rng);
    CMat ac = cmat_const(a);
    auto rep = gradcheck::check_gradients(
        {ac.re, ac.im},
        [n](const std::vector<Tensor>& in) {
            CMat m(in[0], in[1]);
            CMat inv = cinverse(m);
            return reduce_sum(cabs2(inv));
        });
    REQUIRE(rep.worst_margin < 1.0);
}

TEST_CASE("adjoint conjugates and transposes", "[complex]") {
    Rng rng(113);
    CMatrix a = random_cmatrix(3, 2, rng);
    CMatrix adj_plain = a.adjoint();
    CMatrix adj_tensor = to_cmatrix(cadjoint(cmat_const(a)));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) {
            REQUIRE(adj_plain(i, j) == std::conj(a(j, i)));
            REQUIRE(std::abs(adj_tensor(i, j) - std::conj(a(j, i))) == 0.0);
        }
}

TEST_CASE("CMat requires matching real/imaginary shapes", "[complex]") {
    REQUIRE_THROWS_AS(CMat(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})), ShapeError);
}
