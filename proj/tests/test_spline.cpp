#include <doctest.h>

#include <cmath>

#include "fskan/errors.hpp"
#include "fskan/spline.hpp"

using namespace fskan;

namespace {

// Independent oracle: full basis sum via the naive Cox-de Boor recursion.
double de_boor_oracle(const UnivariateFunction& f, double x) {
    double s = 0.0;
    for (int i = 0; i < f.num_basis(); ++i) s += f.coeffs[static_cast<std::size_t>(i)] * f.basis_value(i, x);
    double base = 0.0;
    if (f.base_kind == BaseKind::identity) base = x;
    if (f.base_kind == BaseKind::silu) base = silu(x);
    return f.w_base * base + f.w_spline * s;
}

UnivariateFunction random_function(CounterRng& rng) {
    SplineOptions opts;
    opts.degree = 3;
    opts.intervals = 5;
    opts.grid_lo = -1.0;
    opts.grid_hi = 1.0;
    opts.base = BaseKind::silu;
    return UnivariateFunction::learnable(opts, rng);
}

}  // namespace

TEST_CASE("eval matches identity and relu constructions") {
    const auto line = UnivariateFunction::from_affine(1.0, 0.0);
    CHECK(line.eval(0.7) == doctest::Approx(0.7).epsilon(1e-14));

    const auto relu = UnivariateFunction::from_relu();
    CHECK(relu.eval(-2.0) == 0.0);
    CHECK(relu.eval(3.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(relu.eval(0.0) == 0.0);

    CHECK_THROWS_AS(line.eval(std::nan("")), ValidationError);
}

TEST_CASE("eval matches the de Boor oracle on and off the grid") {
    CounterRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_function(rng);
        // knots themselves plus random interior points
        for (double x : f.knots) {
            if (x < f.grid_lo || x > f.grid_hi) continue;
            CHECK(f.eval(x) == doctest::Approx(de_boor_oracle(f, x)).epsilon(1e-12));
        }
        for (int i = 0; i < 30; ++i) {
            const double x = rng.uniform(-1.0, 1.0);
            CHECK(f.eval(x) == doctest::Approx(de_boor_oracle(f, x)).epsilon(1e-12));
        }
    }
}

TEST_CASE("partition of unity") {
    CounterRng rng(6);
    for (int degree : {1, 2, 3}) {
        SplineOptions opts;
        opts.degree = degree;
        opts.intervals = 7;
        const auto f = UnivariateFunction::learnable(opts, rng);
        for (int i = 0; i <= 100; ++i) {
            const double x = -1.0 + 2.0 * i / 100;
            double s = 0.0;
            for (int b = 0; b < f.num_basis(); ++b) s += f.basis_value(b, x);
            REQUIRE(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    CounterRng rng(8);
    const double h = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto f = random_function(rng);
        for (int i = 0; i < 10; ++i) {
            const double x = rng.uniform(-1.4, 1.4);  // includes extrapolation region
            const auto g = f.eval_grad(x);
            const double fd_dx = (f.eval(x + h) - f.eval(x - h)) / (2 * h);
            CHECK(std::abs(g.dvalue_dx - fd_dx) / (1.0 + std::abs(g.dvalue_dx)) < 1e-6);

            // parameter gradients: coefficients, w_base, w_spline
            for (std::size_t c = 0; c < f.coeffs.size(); c += 3) {
                const double keep = f.coeffs[c];
                f.coeffs[c] = keep + h;
                const double up = f.eval(x);
                f.coeffs[c] = keep - h;
                const double dn = f.eval(x);
                f.coeffs[c] = keep;
                CHECK(std::abs(g.dcoeffs[c] - (up - dn) / (2 * h)) < 1e-6);
            }
            const double wb = f.w_base;
            f.w_base = wb + h;
            const double up_b = f.eval(x);
            f.w_base = wb - h;
            const double dn_b = f.eval(x);
            f.w_base = wb;
            CHECK(std::abs(g.dw_base - (up_b - dn_b) / (2 * h)) < 1e-6);

            const double ws = f.w_spline;
            f.w_spline = ws + h;
            const double up_s = f.eval(x);
            f.w_spline = ws - h;
            const double dn_s = f.eval(x);
            f.w_spline = ws;
            CHECK(std::abs(g.dw_spline - (up_s - dn_s) / (2 * h)) < 1e-6);
            ++checked;
        }
    }
    CHECK(checked == 1000);
}

TEST_CASE("relu subgradient convention") {
    const auto relu = UnivariateFunction::from_relu();
    CHECK(relu.eval_dx(-1.0) == 0.0);
    CHECK(relu.eval_dx(1.0) == doctest::Approx(1.0).epsilon(1e-14));
    const auto affine = UnivariateFunction::from_affine(2.0, 1.0);
    CHECK(affine.eval_dx(0.3) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(affine.eval_dx(5.0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("from_relu and from_affine are exact") {
    CounterRng rng(9);
    const auto relu = UnivariateFunction::from_relu();
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-4.0, 4.0);
        worst = std::max(worst, std::abs(relu.eval(x) - std::max(0.0, x)));
    }
    CHECK(worst == 0.0);

    for (int trial = 0; trial < 10; ++trial) {
        const double a = rng.uniform(-3.0, 3.0);
        const double b = rng.uniform(-1.0, 1.0);
        const auto f = UnivariateFunction::from_affine(a, b);
        for (int i = 0; i < 100; ++i) {
            const double x = rng.uniform(-2.0, 2.0);  // beyond the grid too
            REQUIRE(std::abs(f.eval(x) - (a * x + b)) <= 1e-12 * (1.0 + std::abs(a * x + b)));
        }
    }
    const auto f = UnivariateFunction::from_affine(-3.0, 0.5);
    CHECK(f.eval(2.0) == doctest::Approx(-5.5).epsilon(1e-14));
}

TEST_CASE("piecewise-linear interpolation") {
    const auto lin = UnivariateFunction::from_piecewise_linear({0.0, 1.0}, {0.0, 1.0});
    CHECK(lin.eval(0.5) == doctest::Approx(0.5).epsilon(1e-14));

    const auto abs = UnivariateFunction::from_piecewise_linear({-1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
    CHECK(abs.eval(-0.25) == doctest::Approx(0.25).epsilon(1e-13));

    // sin on 64 nodes: classical PL bound, checked numerically.
    std::vector<double> xs(64), ys(64);
    for (int i = 0; i < 64; ++i) {
        xs[static_cast<std::size_t>(i)] = -M_PI + 2 * M_PI * i / 63;
        ys[static_cast<std::size_t>(i)] = std::sin(xs[static_cast<std::size_t>(i)]);
    }
    const auto s = UnivariateFunction::from_piecewise_linear(xs, ys);
    double sup = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double x = -M_PI + 2 * M_PI * i / 9999;
        sup = std::max(sup, std::abs(s.eval(x) - std::sin(x)));
    }
    CHECK(sup < 0.01);

    CHECK_THROWS_AS(UnivariateFunction::from_piecewise_linear({1.0, 0.0}, {0.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(UnivariateFunction::from_piecewise_linear({0.0}, {0.0}), ValidationError);
}

TEST_CASE("linear extrapolation outside the grid") {
    CounterRng rng(10);
    const auto f = random_function(rng);
    const double v = f.eval(1.0);
    // spline part continues with the boundary slope; SiLU contributes its own curvature
    const double slope = f.eval_dx(1.0);
    const double predicted = v + slope * 0.25;
    const double actual = f.eval(1.25);
    // agreement up to the base-activation's second-order term only
    CHECK(std::abs(actual - predicted) < 0.05);

    // with no base activation the extrapolation is exactly linear
    auto g = f;
    g.base_kind = BaseKind::none;
    const double g1 = g.eval(1.0), g2 = g.eval(1.5), g3 = g.eval(2.0);
    CHECK(g3 - g2 == doctest::Approx(g2 - g1).epsilon(1e-12));
}

TEST_CASE("add_constant shifts everywhere") {
    CounterRng rng(12);
    auto f = random_function(rng);
    const double before_in = f.eval(0.33), before_out = f.eval(2.5);
    f.add_constant(1.75);
    CHECK(f.eval(0.33) == doctest::Approx(before_in + 1.75).epsilon(1e-12));
    CHECK(f.eval(2.5) == doctest::Approx(before_out + 1.75).epsilon(1e-12));

    auto z = UnivariateFunction::zero();
    z.w_spline = 0.0;
    z.add_constant(-0.5);
    CHECK(z.eval(0.9) == doctest::Approx(-0.5).epsilon(1e-14));
}
