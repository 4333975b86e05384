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

#include "ddlink/tensor.hpp"

#include "gradcheck.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

using namespace ddlink;
using namespace ddlink::ad;

TEST_CASE("erfc approximation stays within its absolute error budget", "[tensor][erfc]") {
    REQUIRE(std::fabs(erfc_scalar(0.0) - 1.0) <= 1.5e-7);
    for (double x = -8.0; x <= 8.0; x += 0.0173)
        REQUIRE(std::fabs(erfc_scalar(x) - std::erfc(x)) <= 1.5e-7);
    REQUIRE(erfc_scalar(30.0) == 0.0);
    REQUIRE(std::fabs(erfc_scalar(-30.0) - 2.0) <= 1.5e-7);
}

TEST_CASE("erfc derivative matches a central difference at x = 0.5", "[tensor][erfc]") {
    const double h = 1e-5;
    const double fd = (erfc_scalar(0.5 + h) - erfc_scalar(0.5 - h)) / (2.0 * h);
    const double an = erfc_derivative(0.5);
    REQUIRE(std::fabs(fd - an) / std::fabs(an) < 1e-6);
}

TEST_CASE("matmul against the identity returns the operand", "[tensor]") {
    Rng rng(3);
    Tensor a = gradcheck::random_tensor({3, 3}, rng);
    Tensor id(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = matmul(id, a);
    for (std::size_t i = 0; i < 9; ++i) REQUIRE(out.values()[i] == a.values()[i]);
}

TEST_CASE("shape mismatch raises a dimension error", "[tensor]") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 3});
    REQUIRE_THROWS_AS(add(a, b), ShapeError);
    REQUIRE_THROWS_AS(matmul(a, a), ShapeError);
    REQUIRE_THROWS_AS(reshape(a, {4, 2}), ShapeError);
    REQUIRE_THROWS_AS(diag_part(a), ShapeError);
}

TEST_CASE("non-finite results name the operation", "[tensor]") {
    Tensor big = Tensor::scalar(1e3);
    try {
        Tensor out = exp(big);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("exp") != std::string::npos);
    }
}

TEST_CASE("reduce_prod handles zeros in the backward pass", "[tensor]") {
    Tensor x(Shape{4}, {2.0, 0.0, 3.0, 5.0});
    Tape tape;
    Tensor tx = tape.variable(x);
    Tensor p = reduce_prod(tx);
    REQUIRE(p.value() == 0.0);
    Gradients g = tape.backward(p);
    const ad::Tensor gt = g.wrt(tx);
    const auto& gv = gt.values();
    REQUIRE(gv[0] == 0.0);
    REQUIRE(gv[1] == 30.0); // 2*3*5
    REQUIRE(gv[2] == 0.0);
    REQUIRE(gv[3] == 0.0);
}

TEST_CASE("backward of a plain sum is all ones", "[tensor]") {
    Rng rng(5);
    Tensor x = gradcheck::random_tensor({3, 4}, rng);
    Tape tape;
    Tensor tx = tape.variable(x);
    Gradients g = tape.backward(reduce_sum(tx));
    const Tensor gt = g.wrt(tx);
    for (double v : gt.values()) REQUIRE(v == 1.0);
}

TEST_CASE("backward of a scalar product is the swapped pair", "[tensor]") {
    Tape tape;
    Tensor x = tape.variable(Tensor::scalar(3.0));
    Tensor y = tape.variable(Tensor::scalar(-2.0));
    Gradients g = tape.backward(mul(x, y));
    REQUIRE(g.wrt(x).value() == -2.0);
    REQUIRE(g.wrt(y).value() == 3.0);
}

TEST_CASE("backward requires a scalar root on the same tape", "[tensor]") {
    Tape tape;
    Tensor x = tape.variable(Tensor::zeros({2, 2}));
    REQUIRE_THROWS_AS(tape.backward(x), ShapeError);
    Tape other;
    Tensor y = other.variable(Tensor::scalar(1.0));
    REQUIRE_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("leaves unreachable from the root get zero gradients", "[tensor]") {
    Tape tape;
    Tensor x = tape.variable(Tensor::scalar(2.0));
    Tensor y = tape.variable(Tensor::scalar(7.0));
    Gradients g = tape.backward(mul(x, x));
    REQUIRE(g.wrt(y).value() == 0.0);
    REQUIRE(g.wrt(x).value() == 4.0);
}

namespace {

/// Direct nested-loop convolution, accumulating over a zero-padded copy.
std::vector<double> conv2d_reference(const std::vector<double>& in, int h, int w, int cin,
                                     const std::vector<double>& wt, int cout, int kh, int kw,
                                     const std::vector<double>& bias, int ph, int pw) {
    const int hp = h + 2 * ph, wp = w + 2 * pw;
    std::vector<double> padded(static_cast<std::size_t>(hp) * wp * cin, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < cin; ++c)
                padded[((static_cast<std::size_t>(y) + ph) * wp + (x + pw)) * cin + c] =
                    in[(static_cast<std::size_t>(y) * w + x) * cin + c];
    const int oh = hp - kh + 1, ow = wp - kw + 1;
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * cout);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = bias[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ci = 0; ci < cin; ++ci)
                            acc += padded[((static_cast<std::size_t>(oy) + ky) * wp + (ox + kx)) * cin + ci] *
                                   wt[((static_cast<std::size_t>(co) * kh + ky) * kw + kx) * cin + ci];
                out[(static_cast<std::size_t>(oy) * ow + ox) * cout + co] = acc;
            }
    return out;
}

} // namespace

TEST_CASE("conv2d forward equals the nested-loop reference exactly", "[tensor][conv]") {
    Rng rng(17);
    const int h = 6, w = 5, cin = 2, cout = 3, kk = 3;
    Tensor in = gradcheck::random_tensor({h, w, cin}, rng);
    Tensor wt = gradcheck::random_tensor({cout, kk, kk, cin}, rng);
    Tensor bias = gradcheck::random_tensor({cout}, rng);
    Tensor out = conv2d(in, wt, bias); // same padding
    const auto ref = conv2d_reference(in.values(), h, w, cin, wt.values(), cout, kk, kk,
                                      bias.values(), 1, 1);
    REQUIRE(out.shape() == Shape{h, w, cout});
    REQUIRE(out.values().size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(out.values()[i] == ref[i]);

    SECTION("explicit zero padding") {
        Tensor valid = conv2d(in, wt, bias, 0, 0);
        const auto ref0 = conv2d_reference(in.values(), h, w, cin, wt.values(), cout, kk, kk,
                                           bias.values(), 0, 0);
        REQUIRE(valid.shape() == Shape{h - 2, w - 2, cout});
        for (std::size_t i = 0; i < ref0.size(); ++i) REQUIRE(valid.values()[i] == ref0[i]);
    }
}

TEST_CASE("max_pool2d forward equals the nested-loop reference exactly", "[tensor][conv]") {
    Rng rng(19);
    const int h = 6, w = 6, c = 2, p = 2;
    Tensor in = gradcheck::random_tensor({h, w, c}, rng);
    Tensor out = max_pool2d(in, p);
    REQUIRE(out.shape() == Shape{3, 3, 2});
    for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox)
            for (int ci = 0; ci < c; ++ci) {
                double best = -1e300;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        best = std::max(best, in.at({oy * p + dy, ox * p + dx, ci}));
                REQUIRE(out.at({oy, ox, ci}) == best);
            }
}

TEST_CASE("max_pool2d resolves ties to the first element in scan order", "[tensor][conv]") {
    Tensor in(Shape{2, 2, 1}, {5.0, 5.0, 5.0, 5.0});
    Tape tape;
    Tensor tin = tape.variable(in);
    Tensor out = max_pool2d(tin, 2);
    Gradients g = tape.backward(reduce_sum(out));
    const Tensor gt = g.wrt(tin);
    const auto& gv = gt.values();
    REQUIRE(gv[0] == 1.0);
    REQUIRE(gv[1] == 0.0);
    REQUIRE(gv[2] == 0.0);
    REQUIRE(gv[3] == 0.0);
}

TEST_CASE("every operation passes a central-difference gradient check", "[tensor][gradcheck]") {
    Rng rng(23);
    auto weighted_sum = [&rng](const Tensor& t) {
        // random fixed weights turn any output into a scalar
        Tensor w = gradcheck::random_tensor(t.shape(), rng);
        return [w](const Tensor& x) { return reduce_sum(mul(x, w)); };
    };

    SECTION("elementwise binary ops") {
        Tensor a = gradcheck::random_tensor({3, 4}, rng);
        Tensor b = gradcheck::random_tensor({3, 4}, rng);
        for (auto op : {add, sub, mul}) {
            auto rep = gradcheck::check_gradients(
                {a, b}, [op](const std::vector<Tensor>& in) {
                    return reduce_sum(op(in[0], in[1]));
                });
            REQUIRE(rep.worst_margin < 1.0);
        }
    }
    SECTION("scalar broadcast") {
        Tensor a = gradcheck::random_tensor({3, 4}, rng);
        Tensor s = gradcheck::random_tensor({1}, rng);
        auto rep = gradcheck::check_gradients({a, s}, [](const std::vector<Tensor>& in) {
            return reduce_sum(mul(in[0], in[1]));
        });
        REQUIRE(rep.worst_margin < 1.0);
        rep = gradcheck::check_gradients({s, a}, [](const std::vector<Tensor>& in) {
            return reduce_sum(sub(in[0], in[1]));
        });
        REQUIRE(rep.worst_margin < 1.0);
    }
    SECTION("unary smooth ops") {
        Tensor x = gradcheck::random_tensor({2, 5}, rng);
        Tensor pos = gradcheck::random_tensor({2, 5}, rng, 0.5, 2.5);
        struct Case {
            Tensor input;
            Tensor (*op)(const Tensor&);
        };
        const Case cases[] = {
            {x, [](const Tensor& t) { return exp(t); }},
            {x, [](const Tensor& t) { return tanh(t); }},
            {x, [](const Tensor& t) { return sigmoid(t); }},
            {x, [](const Tensor& t) { return erfc(t); }},
            {pos, [](const Tensor& t) { return sqrt(t); }},
            {pos, [](const Tensor& t) { return reciprocal(t); }},
            {x, [](const Tensor& t) { return scale(t, -1.7); }},
        };
        for (const Case& c : cases) {
            auto fn = c.op;
            auto rep = gradcheck::check_gradients({c.input}, [fn](const std::vector<Tensor>& in) {
                return reduce_sum(fn(in[0]));
            });
            REQUIRE(rep.worst_margin < 1.0);
        }
    }
    SECTION("kinked ops away from their kinks") {
        // inputs in [0.5, 2.5] with an odd sign pattern keep |x| >= 0.5
        Tensor mag = gradcheck::random_tensor({3, 3}, rng, 0.5, 2.5);
        std::vector<double> signed_vals = mag.values();
        for (std::size_t i = 0; i < signed_vals.size(); ++i)
            if (i % 2 == 0) signed_vals[i] = -signed_vals[i];
        Tensor x(Shape{3, 3}, signed_vals);
        for (auto fn : {+[](const Tensor& t) { return relu(t); },
                        +[](const Tensor& t) { return clamp_min(t, 0.0); },
                        +[](const Tensor& t) { return clamp_max(t, 0.0); }}) {
            auto rep = gradcheck::check_gradients({x}, [fn](const std::vector<Tensor>& in) {
                return reduce_sum(fn(in[0]));
            });
            REQUIRE(rep.worst_margin < 1.0);
        }
    }
    SECTION("matmul, transpose, reshape, slices") {
        Tensor a = gradcheck::random_tensor({3, 4}, rng);
        Tensor b = gradcheck::random_tensor({4, 2}, rng);
        Tensor w = gradcheck::random_tensor({3, 2}, rng);
        auto rep = gradcheck::check_gradients({a, b}, [&w](const std::vector<Tensor>& in) {
            return reduce_sum(mul(matmul(in[0], in[1]), w));
        });
        REQUIRE(rep.worst_margin < 1.0);

        Tensor sq = gradcheck::random_tensor({4, 4}, rng);
        rep = gradcheck::check_gradients({sq}, [](const std::vector<Tensor>& in) {
            Tensor t = transpose(in[0]);
            Tensor d = diag_part(in[0]);
            Tensor s = slice_rows(in[0], 1, 3);
            return add(add(reduce_sum(t), reduce_sum(mul(d, d))), reduce_sum(s));
        });
        REQUIRE(rep.worst_margin < 1.0);

        rep = gradcheck::check_gradients({a}, [](const std::vector<Tensor>& in) {
            return reduce_sum(reshape(in[0], Shape{2, 6}));
        });
        REQUIRE(rep.worst_margin < 1.0);
    }
    SECTION("reductions and stacking") {
        Tensor x = gradcheck::random_tensor({5}, rng, 0.3, 2.0);
        auto rep = gradcheck::check_gradients({x}, [](const std::vector<Tensor>& in) {
            return reduce_prod(in[0]);
        });
        REQUIRE(rep.worst_margin < 1.0);

        Tensor a = gradcheck::random_tensor({2, 3}, rng);
        Tensor b = gradcheck::random_tensor({2, 3}, rng);
        rep = gradcheck::check_gradients({a, b}, [](const std::vector<Tensor>& in) {
            Tensor st = stack_pair(in[0], in[1]);
            return add(reduce_sum(mul(take_plane(st, 0), take_plane(st, 1))),
                       reduce_sum(st));
        });
        REQUIRE(rep.worst_margin < 1.0);
    }
    SECTION("conv2d and max_pool2d") {
        Tensor in = gradcheck::random_tensor({5, 4, 2}, rng);
        Tensor wt = gradcheck::random_tensor({2, 3, 3, 2}, rng);
        Tensor bias = gradcheck::random_tensor({2}, rng);
        auto rep = gradcheck::check_gradients({in, wt, bias}, [](const std::vector<Tensor>& t) {
            return reduce_sum(tanh(conv2d(t[0], t[1], t[2])));
        });
        REQUIRE(rep.worst_margin < 1.0);

        // pooling: random inputs have no exact ties, so FD is valid
        Tensor pin = gradcheck::random_tensor({4, 4, 2}, rng);
        rep = gradcheck::check_gradients({pin}, [](const std::vector<Tensor>& t) {
            return reduce_sum(max_pool2d(t[0], 2));
        });
        REQUIRE(rep.worst_margin < 1.0);
    }
    (void)weighted_sum;
}

TEST_CASE("identical graphs replay to bitwise-identical values and gradients", "[tensor]") {
    auto run = [] {
        Rng rng(31);
        Tensor a = gradcheck::random_tensor({4, 4}, rng);
        Tensor b = gradcheck::random_tensor({4, 4}, rng);
        Tape tape;
        Tensor ta = tape.variable(a), tb = tape.variable(b);
        Tensor out = reduce_sum(erfc(mul(matmul(ta, tb), Tensor::scalar(0.25))));
        Gradients g = tape.backward(out);
        return std::pair{out.value(), g.wrt(ta).values()};
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    REQUIRE(std::memcmp(&v1, &v2, sizeof v1) == 0);
    REQUIRE(g1.size() == g2.size());
    REQUIRE(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}
