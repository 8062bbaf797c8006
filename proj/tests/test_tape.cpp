#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "lfd/rng.hpp"
#include "lfd/tape.hpp"

using namespace lfd;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scl = 1.0) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scl * rng.normal();
    return m;
}

// Central finite differences of a scalar-valued graph w.r.t. one input
// matrix, compared against the tape gradient.
double max_rel_error(std::function<double(const Mat&)> f, const Mat& x0, const Mat& analytic,
                     double h = 1e-6) {
    double worst = 0.0;
    Mat x = x0;
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) {
            const double keep = x(i, j);
            x(i, j) = keep + h;
            const double fp = f(x);
            x(i, j) = keep - h;
            const double fm = f(x);
            x(i, j) = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(analytic(i, j)), 1e-8});
            worst = std::max(worst, std::abs(fd - analytic(i, j)) / denom);
        }
    }
    return worst;
}

// Builds the graph twice: once for the analytic gradient, then repeatedly
// inside the FD probe.
void check_grad(std::function<Var(Tape&, Var)> build, const Mat& x0, double tol = 1e-6) {
    Tape t;
    Var x = make_leaf(t, x0);
    Var y = build(t, x);
    REQUIRE(y.v().size() == 1);
    t.backward(y.id);
    REQUIRE(t.has_grad(x.id));
    Mat analytic = t.grad(x.id);
    auto f = [&build](const Mat& xv) {
        Tape tt;
        Var xx = make_leaf(tt, xv);
        return build(tt, xx).v()(0, 0);
    };
    CHECK(max_rel_error(f, x0, analytic) < tol);
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
    Rng rng(1);
    Mat a0 = random_mat(3, 4, rng), b0 = random_mat(4, 5, rng);
    Tape t;
    Var a = make_leaf(t, a0);
    Var b = make_leaf(t, b0);
    Var y = sum_all(matmul(a, b));
    CHECK(y.v()(0, 0) == doctest::Approx((a0 * b0).sum()));
    t.backward(y.id);
    Mat ga = t.grad(a.id);
    CHECK((ga - Mat::Ones(3, 5) * b0.transpose()).norm() < 1e-12);

    check_grad([&b0](Tape& tt, Var x) {
        Var bb = make_leaf(tt, b0);
        return sum_all(square(matmul(x, bb)));
    }, a0);
    check_grad([&a0](Tape& tt, Var x) {
        Var aa = make_leaf(tt, a0);
        return sum_all(square(matmul(aa, x)));
    }, b0);
}

TEST_CASE("matmul_nt matches explicit transpose") {
    Rng rng(2);
    Mat a0 = random_mat(3, 4, rng), b0 = random_mat(5, 4, rng);
    Tape t;
    Var y = matmul_nt(make_leaf(t, a0), make_leaf(t, b0));
    CHECK((y.v() - a0 * b0.transpose()).norm() < 1e-14);
    check_grad([&b0](Tape& tt, Var x) {
        return sum_all(square(matmul_nt(x, make_leaf(tt, b0))));
    }, a0);
    check_grad([&a0](Tape& tt, Var x) {
        return sum_all(square(matmul_nt(make_leaf(tt, a0), x)));
    }, b0);
}

TEST_CASE("elementwise op gradients") {
    Rng rng(3);
    Mat x0 = random_mat(4, 3, rng);
    check_grad([](Tape& t, Var x) { return sum_all(square(gelu(x))); }, x0, 1e-5);
    check_grad([](Tape& t, Var x) { return sum_all(square(tanh_v(x))); }, x0, 1e-5);
    check_grad([](Tape& t, Var x) { return sum_all(square(sigmoid(x))); }, x0, 1e-5);
    check_grad([](Tape& t, Var x) { return sum_all(exp_v(scale(x, 0.3))); }, x0, 1e-5);
    check_grad([](Tape& t, Var x) { return sum_all(square(one_minus(x))); }, x0);
    check_grad([](Tape& t, Var x) { return mean_all(square(add_scalar(x, 1.5))); }, x0);
    // relu/abs away from kinks
    Mat far = x0;
    for (int i = 0; i < far.size(); ++i) {
        if (std::abs(far.data()[i]) < 0.05) far.data()[i] = 0.2;
    }
    check_grad([](Tape& t, Var x) { return sum_all(square(relu(x))); }, far, 1e-5);
    check_grad([](Tape& t, Var x) { return sum_all(square(abs_v(x))); }, far, 1e-5);
}

TEST_CASE("broadcast, slice and concat gradients") {
    Rng rng(4);
    Mat x0 = random_mat(5, 4, rng);
    Mat r0 = random_mat(1, 4, rng);
    check_grad([&r0](Tape& t, Var x) {
        return sum_all(square(add_rowvec(x, make_leaf(t, r0))));
    }, x0);
    check_grad([&x0](Tape& t, Var r) {
        return sum_all(square(mul_rowvec(make_leaf(t, x0), r)));
    }, r0);
    check_grad([](Tape& t, Var x) {
        Var a = slice_rows(x, 1, 2);
        Var b = slice_cols(x, 0, 2);
        return add(sum_all(square(a)), sum_all(square(b)));
    }, x0);
    check_grad([](Tape& t, Var x) {
        Var a = slice_rows(x, 0, 2);
        Var b = slice_rows(x, 2, 3);
        Var joined = concat_rows({b, a});
        Var side = concat_cols({slice_cols(x, 1, 1), slice_cols(x, 3, 1)});
        return add(sum_all(square(joined)), sum_all(square(side)));
    }, x0);
    check_grad([](Tape& t, Var x) {
        return sum_all(square(repeat_row(mean_rows(x), 7)));
    }, x0);
}

TEST_CASE("softmax rows: value, mask, gradient") {
    Rng rng(5);
    Mat s0 = random_mat(4, 4, rng, 2.0);
    {
        Tape t;
        Var y = softmax_rows(make_leaf(t, s0), true, 0);
        for (int i = 0; i < 4; ++i) {
            CHECK(y.v().row(i).sum() == doctest::Approx(1.0));
            for (int j = i + 1; j < 4; ++j) CHECK(y.v()(i, j) == 0.0);
        }
    }
    check_grad([](Tape& t, Var x) {
        return sum_all(square(softmax_rows(x, false)));
    }, s0, 1e-5);
    check_grad([](Tape& t, Var x) {
        return sum_all(square(softmax_rows(x, true, 1)));
    }, s0, 1e-5);
}

TEST_CASE("layernorm rows: value and gradient") {
    Rng rng(6);
    Mat x0 = random_mat(3, 8, rng, 3.0);
    Tape t;
    Var y = layernorm_rows(make_leaf(t, x0));
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(y.v().row(i).mean()) < 1e-12);
        CHECK(y.v().row(i).array().square().mean() == doctest::Approx(1.0).epsilon(1e-4));
    }
    // note: sum of squares of a normalized row is ~constant, so probe
    // through a random projection instead
    Mat w = random_mat(3, 8, rng);
    check_grad([&w](Tape& tt, Var x) {
        return sum_all(square(hadamard(layernorm_rows(x), make_const(tt, w))));
    }, x0, 1e-5);
}

TEST_CASE("gather and cross entropy") {
    Rng rng(7);
    Mat table = random_mat(6, 3, rng);
    {
        Tape t;
        Var g = gather_rows(make_leaf(t, table), {4, 0, 4});
        CHECK((g.v().row(0) - table.row(4)).norm() == 0.0);
        CHECK((g.v().row(2) - table.row(4)).norm() == 0.0);
    }
    check_grad([](Tape& t, Var x) {
        return sum_all(square(gather_rows(x, {1, 1, 3, 5})));
    }, table);

    Mat logits = random_mat(5, 7, rng, 2.0);
    std::vector<int> targets{0, 3, 6, 2, 2};
    // brute-force value
    double expect = 0.0;
    for (int i = 0; i < 5; ++i) {
        double denom = 0.0;
        for (int j = 0; j < 7; ++j) denom += std::exp(logits(i, j));
        expect += -std::log(std::exp(logits(i, targets[(std::size_t)i])) / denom);
    }
    expect /= 5.0;
    Tape t;
    Var ce = cross_entropy_rows(make_leaf(t, logits), targets);
    CHECK(ce.v()(0, 0) == doctest::Approx(expect).epsilon(1e-10));
    check_grad([&targets](Tape& tt, Var x) {
        return cross_entropy_rows(x, targets);
    }, logits, 1e-5);
}

TEST_CASE("cosine distance and row norms") {
    Rng rng(8);
    Mat gt = random_mat(4, 6, rng);
    Mat p0 = random_mat(4, 6, rng);
    {
        Tape t;
        Var d = cosine_distance_sum(make_leaf(t, gt), gt, 1e-8);
        CHECK(d.v()(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
        Var d2 = cosine_distance_sum(make_leaf(t, Mat(-gt)), gt, 1e-8);
        CHECK(d2.v()(0, 0) == doctest::Approx(8.0));  // 4 rows x (1 - (-1))
    }
    check_grad([&gt](Tape& t, Var x) {
        return cosine_distance_sum(x, gt, 1e-8);
    }, p0, 1e-5);
    check_grad([](Tape& t, Var x) {
        return sum_all(square(row_l2norm(x, 1e-12)));
    }, p0, 1e-5);
}

TEST_CASE("conv2d: value against naive loops, gradient") {
    Rng rng(9);
    ConvSpec spec;
    spec.in_h = 6; spec.in_w = 5; spec.in_c = 2;
    spec.kh = 3; spec.kw = 3; spec.out_c = 4;
    spec.stride = 2; spec.pad = 1;
    Mat x0 = random_mat(spec.in_h * spec.in_w, spec.in_c, rng);
    Mat w0 = random_mat(spec.kh * spec.kw * spec.in_c, spec.out_c, rng);
    Mat b0 = random_mat(1, spec.out_c, rng);

    Tape t;
    Var y = conv2d(make_leaf(t, x0), make_leaf(t, w0), make_leaf(t, b0), spec);
    const int oh = spec.out_h(), ow = spec.out_w();
    REQUIRE(y.rows() == oh * ow);
    REQUIRE(y.cols() == spec.out_c);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < spec.out_c; ++oc) {
                double acc = b0(0, oc);
                for (int ky = 0; ky < spec.kh; ++ky) {
                    for (int kx = 0; kx < spec.kw; ++kx) {
                        const int iy = oy * spec.stride + ky - spec.pad;
                        const int ix = ox * spec.stride + kx - spec.pad;
                        if (iy < 0 || iy >= spec.in_h || ix < 0 || ix >= spec.in_w) continue;
                        for (int ic = 0; ic < spec.in_c; ++ic) {
                            acc += x0(iy * spec.in_w + ix, ic) * w0((ky * spec.kw + kx) * spec.in_c + ic, oc);
                        }
                    }
                }
                CHECK(y.v()(oy * ow + ox, oc) == doctest::Approx(acc).epsilon(1e-10));
            }
        }
    }

    check_grad([&](Tape& tt, Var x) {
        return sum_all(square(conv2d(x, make_leaf(tt, w0), make_leaf(tt, b0), spec)));
    }, x0, 1e-5);
    check_grad([&](Tape& tt, Var w) {
        return sum_all(square(conv2d(make_leaf(tt, x0), w, make_leaf(tt, b0), spec)));
    }, w0, 1e-5);
    check_grad([&](Tape& tt, Var b) {
        return sum_all(square(conv2d(make_leaf(tt, x0), make_leaf(tt, w0), b, spec)));
    }, b0, 1e-5);
}

TEST_CASE("constants receive no gradient, shared subgraphs accumulate") {
    Rng rng(10);
    Mat x0 = random_mat(2, 2, rng);
    Tape t;
    Var c = make_const(t, x0);
    Var x = make_leaf(t, x0);
    Var y = sum_all(hadamard(add(x, c), x));  // (x + c) .* x, reused x
    t.backward(y.id);
    CHECK_FALSE(t.has_grad(c.id));
    // d/dx sum((x+c)*x) = 2x + c
    Mat expect = 2.0 * x0 + x0;
    CHECK((t.grad(x.id) - expect).norm() < 1e-12);
}
