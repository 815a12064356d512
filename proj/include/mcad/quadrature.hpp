#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <functional>

namespace mcad {

/// Adaptive Gauss-Kronrod on a finite interval; returns the integral and
/// writes an error estimate if requested.
template <typename F>
double integrate(F&& f, double a, double b, double rel_tol, double* err_out = nullptr) {
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        std::forward<F>(f), a, b, 15, rel_tol, &err);
    if (err_out) *err_out = err;
    return v;
}

/// Integral over [a, inf) mapped to (0, 1] by x = a / t.
template <typename F>
double integrate_tail(F&& f, double a, double rel_tol, double* err_out = nullptr) {
    auto g = [&f, a](double t) {
        const double x = a / t;
        return f(x) * a / (t * t);
    };
    return integrate(g, 0.0, 1.0, rel_tol, err_out);
}

}  // namespace mcad
