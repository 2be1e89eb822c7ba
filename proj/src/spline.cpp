#include "fskan/spline.hpp"

#include <algorithm>
#include <cmath>

#include "fskan/errors.hpp"

namespace fskan {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_dx(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

namespace {

constexpr int kMaxDegree = 7;

double base_value(BaseKind kind, double x) {
    switch (kind) {
        case BaseKind::none: return 0.0;
        case BaseKind::identity: return x;
        case BaseKind::silu: return silu(x);
    }
    return 0.0;
}

double base_deriv(BaseKind kind, double x) {
    switch (kind) {
        case BaseKind::none: return 0.0;
        case BaseKind::identity: return 1.0;
        case BaseKind::silu: return silu_dx(x);
    }
    return 0.0;
}

}  // namespace

void UnivariateFunction::init_grads() {
    g_coeffs.assign(coeffs.size(), 0.0);
    g_w_base = 0.0;
    g_w_spline = 0.0;
}

UnivariateFunction UnivariateFunction::learnable(const SplineOptions& opts, CounterRng& rng) {
    if (opts.degree < 1 || opts.degree > kMaxDegree) throw ValidationError("spline degree out of range");
    if (opts.intervals < 1) throw ValidationError("spline needs at least one interval");
    if (!(opts.grid_lo < opts.grid_hi)) throw ValidationError("spline grid interval is empty");
    UnivariateFunction f;
    f.degree = opts.degree;
    f.grid_lo = opts.grid_lo;
    f.grid_hi = opts.grid_hi;
    const int G = opts.intervals;
    const double h = (opts.grid_hi - opts.grid_lo) / G;
    f.knots.resize(static_cast<std::size_t>(G + 2 * opts.degree + 1));
    for (int i = 0; i < G + 2 * opts.degree + 1; ++i)
        f.knots[static_cast<std::size_t>(i)] = opts.grid_lo + (i - opts.degree) * h;
    f.coeffs.resize(static_cast<std::size_t>(G + opts.degree));
    for (auto& c : f.coeffs) c = rng.normal(0.0, opts.coeff_stddev);
    f.base_kind = opts.base;
    f.w_base = opts.base_weight_stddev > 0 ? rng.normal(0.0, opts.base_weight_stddev) : 1.0;
    f.w_spline = 1.0;
    f.init_grads();
    return f;
}

UnivariateFunction UnivariateFunction::from_relu(double lo, double hi) {
    if (!(lo < 0.0 && 0.0 < hi)) throw ValidationError("from_relu: domain must contain 0 strictly");
    return from_piecewise_linear({lo, 0.0, hi}, {0.0, 0.0, hi});
}

UnivariateFunction UnivariateFunction::from_affine(double a, double b_share, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("from_affine: empty domain");
    return from_piecewise_linear({lo, hi}, {a * lo + b_share, a * hi + b_share});
}

UnivariateFunction UnivariateFunction::from_piecewise_linear(const std::vector<double>& xs,
                                                             const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ValidationError("from_piecewise_linear: need matching xs/ys with at least two nodes");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i - 1] < xs[i])) throw ValidationError("from_piecewise_linear: xs must be strictly increasing");
    UnivariateFunction f;
    f.degree = 1;
    f.grid_lo = xs.front();
    f.grid_hi = xs.back();
    // Degree-1 knots: one extension knot each side, spacing of the adjacent
    // interval. Coefficients equal nodal values.
    f.knots.reserve(xs.size() + 2);
    f.knots.push_back(xs.front() - (xs[1] - xs[0]));
    f.knots.insert(f.knots.end(), xs.begin(), xs.end());
    f.knots.push_back(xs.back() + (xs[xs.size() - 1] - xs[xs.size() - 2]));
    f.coeffs = ys;
    f.base_kind = BaseKind::none;
    f.w_base = 0.0;
    f.w_spline = 1.0;
    f.init_grads();
    return f;
}

UnivariateFunction UnivariateFunction::zero() { return from_affine(0.0, 0.0); }

int UnivariateFunction::basis_row(double x, double* N) const {
    // Knot span j with knots[j] <= x < knots[j+1], clamped to the grid range.
    const int p = degree;
    const int last = static_cast<int>(knots.size()) - p - 2;  // last valid span
    auto it = std::upper_bound(knots.begin() + p, knots.end() - p - 1, x);
    int span = static_cast<int>(it - knots.begin()) - 1;
    span = std::clamp(span, p, last);

    double left[kMaxDegree + 1];
    double right[kMaxDegree + 1];
    N[0] = 1.0;
    for (int r = 1; r <= p; ++r) {
        left[r] = x - knots[static_cast<std::size_t>(span + 1 - r)];
        right[r] = knots[static_cast<std::size_t>(span + r)] - x;
        double saved = 0.0;
        for (int k = 0; k < r; ++k) {
            const double temp = N[k] / (right[k + 1] + left[r - k]);
            N[k] = saved + right[k + 1] * temp;
            saved = left[r - k] * temp;
        }
        N[r] = saved;
    }
    return span;
}

int UnivariateFunction::basis_row_deriv(double x, double* N, double* dN) const {
    const int p = degree;
    const int span = basis_row(x, N);
    // Degree-(p-1) row at the same span.
    double M[kMaxDegree + 1];
    double left[kMaxDegree + 1];
    double right[kMaxDegree + 1];
    M[0] = 1.0;
    for (int r = 1; r <= p - 1; ++r) {
        left[r] = x - knots[static_cast<std::size_t>(span + 1 - r)];
        right[r] = knots[static_cast<std::size_t>(span + r)] - x;
        double saved = 0.0;
        for (int k = 0; k < r; ++k) {
            const double temp = M[k] / (right[k + 1] + left[r - k]);
            M[k] = saved + right[k + 1] * temp;
            saved = left[r - k] * temp;
        }
        M[r] = saved;
    }
    // dB_{i,p} = p * ( M_{i,p-1}/(t[i+p]-t[i]) - M_{i+1,p-1}/(t[i+p+1]-t[i+1]) ),
    // where M_{span-p+1+k, p-1} = M[k] and other entries vanish at x.
    for (int k = 0; k <= p; ++k) {
        const int i = span - p + k;
        double term1 = 0.0, term2 = 0.0;
        if (k >= 1) {
            const double denom = knots[static_cast<std::size_t>(i + p)] - knots[static_cast<std::size_t>(i)];
            term1 = M[k - 1] / denom;
        }
        if (k <= p - 1) {
            const double denom = knots[static_cast<std::size_t>(i + p + 1)] - knots[static_cast<std::size_t>(i + 1)];
            term2 = M[k] / denom;
        }
        dN[k] = p * (term1 - term2);
    }
    return span;
}

double UnivariateFunction::spline_value(double x) const {
    double N[kMaxDegree + 1];
    const int span = basis_row(x, N);
    double v = 0.0;
    for (int k = 0; k <= degree; ++k) v += coeffs[static_cast<std::size_t>(span - degree + k)] * N[k];
    return v;
}

void UnivariateFunction::spline_value_slope(double x, double& v, double& s) const {
    double N[kMaxDegree + 1];
    double dN[kMaxDegree + 1];
    const int span = basis_row_deriv(x, N, dN);
    v = 0.0;
    s = 0.0;
    for (int k = 0; k <= degree; ++k) {
        const double c = coeffs[static_cast<std::size_t>(span - degree + k)];
        v += c * N[k];
        s += c * dN[k];
    }
}

double UnivariateFunction::eval(double x) const {
    if (!std::isfinite(x)) throw ValidationError("spline eval: non-finite input");
    double sv;
    if (x < grid_lo || x > grid_hi) {
        const double xb = x < grid_lo ? grid_lo : grid_hi;
        double v, s;
        spline_value_slope(xb, v, s);
        sv = v + s * (x - xb);
    } else {
        sv = spline_value(x);
    }
    return w_base * base_value(base_kind, x) + w_spline * sv;
}

double UnivariateFunction::eval_dx(double x) const {
    if (!std::isfinite(x)) throw ValidationError("spline eval: non-finite input");
    double s;
    if (x < grid_lo || x > grid_hi) {
        const double xb = x < grid_lo ? grid_lo : grid_hi;
        double v;
        spline_value_slope(xb, v, s);
    } else {
        double v;
        spline_value_slope(x, v, s);
    }
    return w_base * base_deriv(base_kind, x) + w_spline * s;
}

UnivariateGrad UnivariateFunction::eval_grad(double x) const {
    if (!std::isfinite(x)) throw ValidationError("spline eval: non-finite input");
    UnivariateGrad g;
    g.dcoeffs.assign(coeffs.size(), 0.0);

    double N[kMaxDegree + 1];
    double dN[kMaxDegree + 1];
    double sv, ss;
    if (x < grid_lo || x > grid_hi) {
        const double xb = x < grid_lo ? grid_lo : grid_hi;
        const double dx = x - xb;
        const int span = basis_row_deriv(xb, N, dN);
        sv = 0.0;
        ss = 0.0;
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(span - degree + k);
            sv += coeffs[i] * N[k];
            ss += coeffs[i] * dN[k];
            g.dcoeffs[i] = w_spline * (N[k] + dN[k] * dx);
        }
        sv += ss * dx;
    } else {
        const int span = basis_row_deriv(x, N, dN);
        sv = 0.0;
        ss = 0.0;
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(span - degree + k);
            sv += coeffs[i] * N[k];
            ss += coeffs[i] * dN[k];
            g.dcoeffs[i] = w_spline * N[k];
        }
    }
    const double bv = base_value(base_kind, x);
    g.value = w_base * bv + w_spline * sv;
    g.dvalue_dx = w_base * base_deriv(base_kind, x) + w_spline * ss;
    g.dw_base = bv;
    g.dw_spline = sv;
    return g;
}

double UnivariateFunction::backward_accum(double x, double upstream, double* dx_out) {
    if (g_coeffs.size() != coeffs.size()) init_grads();
    double N[kMaxDegree + 1];
    double dN[kMaxDegree + 1];
    double sv, ss;
    if (x < grid_lo || x > grid_hi) {
        const double xb = x < grid_lo ? grid_lo : grid_hi;
        const double dx = x - xb;
        const int span = basis_row_deriv(xb, N, dN);
        sv = 0.0;
        ss = 0.0;
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(span - degree + k);
            sv += coeffs[i] * N[k];
            ss += coeffs[i] * dN[k];
            g_coeffs[i] += upstream * w_spline * (N[k] + dN[k] * dx);
        }
        sv += ss * dx;
    } else {
        const int span = basis_row_deriv(x, N, dN);
        sv = 0.0;
        ss = 0.0;
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(span - degree + k);
            sv += coeffs[i] * N[k];
            ss += coeffs[i] * dN[k];
            g_coeffs[i] += upstream * w_spline * N[k];
        }
    }
    const double bv = base_value(base_kind, x);
    g_w_base += upstream * bv;
    g_w_spline += upstream * sv;
    if (dx_out) *dx_out += upstream * (w_base * base_deriv(base_kind, x) + w_spline * ss);
    return w_base * bv + w_spline * sv;
}

void UnivariateFunction::prepare_basis(double x, BasisEval& be) const {
    be.x = x;
    if (x < grid_lo || x > grid_hi) {
        const double xb = x < grid_lo ? grid_lo : grid_hi;
        be.outside = true;
        be.dx = x - xb;
        be.span = basis_row_deriv(xb, be.N, be.dN);
    } else {
        be.outside = false;
        be.dx = 0.0;
        be.span = basis_row_deriv(x, be.N, be.dN);
    }
    be.base_value = base_value(base_kind, x);
    be.base_deriv = base_deriv(base_kind, x);
}

double UnivariateFunction::value_from(const BasisEval& be) const {
    double sv = 0.0, ss = 0.0;
    for (int k = 0; k <= degree; ++k) {
        const double c = coeffs[static_cast<std::size_t>(be.span - degree + k)];
        sv += c * be.N[k];
        ss += c * be.dN[k];
    }
    if (be.outside) sv += ss * be.dx;
    return w_base * be.base_value + w_spline * sv;
}

void UnivariateFunction::backward_from(const BasisEval& be, double upstream, double* dx_out) {
    if (g_coeffs.size() != coeffs.size()) init_grads();
    double sv = 0.0, ss = 0.0;
    if (be.outside) {
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(be.span - degree + k);
            sv += coeffs[i] * be.N[k];
            ss += coeffs[i] * be.dN[k];
            g_coeffs[i] += upstream * w_spline * (be.N[k] + be.dN[k] * be.dx);
        }
        sv += ss * be.dx;
    } else {
        for (int k = 0; k <= degree; ++k) {
            const std::size_t i = static_cast<std::size_t>(be.span - degree + k);
            sv += coeffs[i] * be.N[k];
            ss += coeffs[i] * be.dN[k];
            g_coeffs[i] += upstream * w_spline * be.N[k];
        }
    }
    g_w_base += upstream * be.base_value;
    g_w_spline += upstream * sv;
    if (dx_out) *dx_out += upstream * (w_base * be.base_deriv + w_spline * ss);
}

void UnivariateFunction::add_constant(double c) {
    if (c == 0.0) return;
    if (w_spline != 0.0) {
        const double shift = c / w_spline;
        for (auto& v : coeffs) v += shift;
    } else {
        w_spline = 1.0;
        for (auto& v : coeffs) v = c;
    }
}

void UnivariateFunction::zero_grad() { init_grads(); }

void UnivariateFunction::collect_slots(std::vector<ParamSlot>& out) {
    if (g_coeffs.size() != coeffs.size()) init_grads();
    for (std::size_t i = 0; i < coeffs.size(); ++i) out.push_back({&coeffs[i], &g_coeffs[i]});
    out.push_back({&w_base, &g_w_base});
    out.push_back({&w_spline, &g_w_spline});
}

double UnivariateFunction::basis_value(int i, double x) const {
    // Naive Cox-de Boor recursion, O(2^p); reference implementation.
    const auto& t = knots;
    struct Rec {
        const std::vector<double>& t;
        double x;
        double operator()(int i, int p) const {
            if (p == 0) return (t[static_cast<std::size_t>(i)] <= x && x < t[static_cast<std::size_t>(i + 1)]) ? 1.0 : 0.0;
            double a = 0.0, b = 0.0;
            const double d1 = t[static_cast<std::size_t>(i + p)] - t[static_cast<std::size_t>(i)];
            const double d2 = t[static_cast<std::size_t>(i + p + 1)] - t[static_cast<std::size_t>(i + 1)];
            if (d1 > 0) a = (x - t[static_cast<std::size_t>(i)]) / d1 * (*this)(i, p - 1);
            if (d2 > 0) b = (t[static_cast<std::size_t>(i + p + 1)] - x) / d2 * (*this)(i + 1, p - 1);
            return a + b;
        }
    };
    // Close the half-open support at the right end of the grid.
    if (x == grid_hi) x = grid_hi - 1e-12 * (grid_hi - grid_lo);
    return Rec{t, x}(i, degree);
}

}  // namespace fskan
