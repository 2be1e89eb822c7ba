#pragma once

#include <vector>

#include "fskan/rng.hpp"

namespace fskan {

enum class BaseKind { none, identity, silu };

struct SplineOptions {
    int degree = 3;
    int intervals = 5;
    double grid_lo = -1.0;
    double grid_hi = 1.0;
    BaseKind base = BaseKind::silu;
    double coeff_stddev = 0.1;
    // 0 keeps w_base = 1 everywhere; > 0 draws w_base ~ N(0, sd) per function
    // so sibling channels start decorrelated.
    double base_weight_stddev = 0.0;
};

/// Record of partial derivatives returned by eval_grad.
struct UnivariateGrad {
    double value = 0.0;
    double dvalue_dx = 0.0;
    std::vector<double> dcoeffs;
    double dw_base = 0.0;
    double dw_spline = 0.0;
};

struct ParamSlot {
    double* value;
    double* grad;
};

/// One learnable function: value(x) = w_base * base(x) + w_spline * s(x),
/// where s is a B-spline with an explicit knot vector extending the grid
/// interval. Outside [grid_lo, grid_hi] the spline part extrapolates linearly
/// from the boundary value and slope; the base activation is evaluated as-is.
class UnivariateFunction {
public:
    UnivariateFunction() = default;

    static UnivariateFunction learnable(const SplineOptions& opts, CounterRng& rng);
    /// Degree-1 spline with a knot at 0; exact ReLU everywhere (the linear
    /// extrapolation matches ReLU beyond the grid).
    static UnivariateFunction from_relu(double lo = -4.0, double hi = 4.0);
    /// Exact x -> a*x + b_share (degree-1 spline, linear extrapolation).
    static UnivariateFunction from_affine(double a, double b_share, double lo = -1.0, double hi = 1.0);
    /// Degree-1 spline interpolating (xs, ys) exactly at the nodes; xs must
    /// be strictly increasing with at least two entries.
    static UnivariateFunction from_piecewise_linear(const std::vector<double>& xs,
                                                    const std::vector<double>& ys);
    static UnivariateFunction zero();

    double eval(double x) const;
    double eval_dx(double x) const;
    UnivariateGrad eval_grad(double x) const;

    /// Training path: adds w * value(x) semantics to the accumulated gradient
    /// buffers and returns value(x); *dx_out (if given) receives w * value'(x).
    double backward_accum(double x, double upstream, double* dx_out);

    /// Precomputed basis row at one input, reusable by every function that
    /// shares this function's knot vector (a sub-layer column).
    struct BasisEval {
        int span = 0;
        double N[8];
        double dN[8];
        double x = 0.0;
        double dx = 0.0;       // distance past the grid boundary, 0 inside
        bool outside = false;
        double base_value = 0.0;
        double base_deriv = 0.0;
    };
    void prepare_basis(double x, BasisEval& be) const;
    double value_from(const BasisEval& be) const;
    void backward_from(const BasisEval& be, double upstream, double* dx_out);
    bool same_grid(const UnivariateFunction& other) const {
        return degree == other.degree && base_kind == other.base_kind && knots == other.knots;
    }

    void add_constant(double c);
    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const { return static_cast<int>(coeffs.size()) + 2; }

    int degree = 1;
    double grid_lo = -1.0;
    double grid_hi = 1.0;
    std::vector<double> knots;   // interior strictly increasing, uniform extension outside
    std::vector<double> coeffs;  // num_basis = knots.size() - degree - 1
    BaseKind base_kind = BaseKind::none;
    double w_base = 0.0;
    double w_spline = 1.0;

    std::vector<double> g_coeffs;
    double g_w_base = 0.0;
    double g_w_spline = 0.0;

    /// Value of the i-th basis function at x (naive Cox-de Boor; used by
    /// partition-of-unity checks and as a slow reference path).
    double basis_value(int i, double x) const;
    int num_basis() const { return static_cast<int>(coeffs.size()); }

private:
    void init_grads();
    // Non-zero basis row N[0..degree] at x in [grid_lo, grid_hi]; returns span.
    int basis_row(double x, double* N) const;
    int basis_row_deriv(double x, double* N, double* dN) const;
    double spline_value(double x) const;
    void spline_value_slope(double x, double& v, double& s) const;
};

double silu(double x);
double silu_dx(double x);

}  // namespace fskan
