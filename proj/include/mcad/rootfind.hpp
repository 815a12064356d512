#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mcad {

/// Real polynomial, coefficients ascending in degree. Degree <= 14 by
/// contract (the coordinate-update equations after clearing denominators).
struct RealPolynomial {
    std::vector<double> c;  // c[0] + c[1] x + ...

    int degree() const { return static_cast<int>(c.size()) - 1; }

    double eval(double x) const {
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
        return v;
    }

    double eval_deriv(double x) const {
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 1;) v = v * x + c[k] * static_cast<double>(k);
        return v;
    }

    /// Drops (numerically) vanishing leading coefficients.
    void trim(double tol = 1e-300) {
        while (c.size() > 1 && std::fabs(c.back()) <= tol) c.pop_back();
    }
};

namespace detail {

inline void check_finite(const RealPolynomial& p) {
    for (double v : p.c)
        if (!std::isfinite(v)) throw std::invalid_argument("polynomial: non-finite coefficient");
}

/// Compensated Horner evaluation (error-free transformations): the result
/// is as accurate as standard Horner carried out in twice the working
/// precision. Needed so clustered degree-13/14 roots can be polished below
/// the plain-double conditioning floor.
inline double eval_compensated(const std::vector<double>& c, double x) {
    double s = c.back();
    double comp = 0.0;
    for (std::size_t k = c.size() - 1; k-- > 0;) {
        const double p = s * x;
        const double pi = std::fma(s, x, -p);
        const double t = p + c[k];
        const double v = t - p;
        const double sig = (p - (t - v)) + (c[k] - v);
        s = t;
        comp = comp * x + (pi + sig);
    }
    return s + comp;
}

/// Newton polish driven by the compensated residual.
inline double polish_root(const RealPolynomial& p, double r, int steps = 2) {
    for (int s = 0; s < steps; ++s) {
        const double dp = p.eval_deriv(r);
        if (dp == 0.0) break;
        const double step = eval_compensated(p.c, r) / dp;
        if (!std::isfinite(step)) break;
        r -= step;
    }
    return r;
}

}  // namespace detail

/// Real roots of c0 + c1 x + c2 x^2 + c3 x^3, ascending, by the
/// closed-form discriminant method with a Newton polish. Degenerate
/// quadratic/linear cases fall through.
inline std::vector<double> cubic_real_roots(double c0, double c1, double c2, double c3) {
    if (c1 == 0.0 && c2 == 0.0 && c3 == 0.0)
        throw std::invalid_argument("cubic_real_roots: not a polynomial in x");
    std::vector<double> roots;
    const double scale = std::max({std::fabs(c0), std::fabs(c1), std::fabs(c2), std::fabs(c3)});
    const double tiny = scale * 1e-14;
    if (std::fabs(c3) <= tiny) {
        if (std::fabs(c2) <= tiny) {
            roots.push_back(-c0 / c1);
        } else {
            const double disc = c1 * c1 - 4.0 * c2 * c0;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                // Citardauq form avoids cancellation.
                const double q = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
                roots.push_back(q / c2);
                if (q != 0.0) roots.push_back(c0 / q);
                else roots.push_back(0.0);
            }
        }
    } else {
        // Depressed cubic t^3 + pt + q with x = t - b/3 (monic form).
        const double b = c2 / c3, c = c1 / c3, d = c0 / c3;
        const double p = c - b * b / 3.0;
        const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        const double off = -b / 3.0;
        const double disc = q * q / 4.0 + p * p * p / 27.0;
        if (disc > 0.0) {
            const double s = std::sqrt(disc);
            const double u = std::cbrt(-q / 2.0 + s);
            const double v = std::cbrt(-q / 2.0 - s);
            roots.push_back(u + v + off);
        } else if (disc == 0.0) {
            const double u = std::cbrt(-q / 2.0);
            roots.push_back(2.0 * u + off);
            if (u != 0.0) roots.push_back(-u + off);
        } else {
            constexpr double two_pi_over_3 = 2.0943951023931954923084289221863;
            const double m = 2.0 * std::sqrt(-p / 3.0);
            const double theta = std::acos(std::clamp(3.0 * q / (p * m), -1.0, 1.0)) / 3.0;
            for (int k = 0; k < 3; ++k)
                roots.push_back(m * std::cos(theta - two_pi_over_3 * k) + off);
        }
    }
    RealPolynomial poly{{c0, c1, c2, c3}};
    for (double& r : roots) r = detail::polish_root(poly, r, 1);
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [&](double a, double b2) {
                                return std::fabs(a - b2) <= 1e-9 * std::max(1.0, std::fabs(a));
                            }),
                roots.end());
    return roots;
}

/// All real roots of `poly` inside [lo, hi], ascending, multiple roots
/// reported once. Companion-matrix eigenvalues plus a sign-change sweep of
/// the polynomial on the interval (so clustered or ill-conditioned roots
/// cannot be lost), each polished by Newton and kept only with a residual
/// certificate |p(r)| <= 1e-9 * max|c| * max(1,|r|)^deg or a sign change.
inline std::vector<double> poly_real_roots(RealPolynomial poly, double lo, double hi) {
    detail::check_finite(poly);
    poly.trim();
    const int deg = poly.degree();
    if (deg > 14) throw std::invalid_argument("poly_real_roots: degree > 14 unsupported");
    if (deg <= 0) return {};
    if (!(lo <= hi)) return {};

    double cmax = 0.0;
    for (double v : poly.c) cmax = std::max(cmax, std::fabs(v));
    if (cmax == 0.0) return {};

    std::vector<double> candidates;

    // Companion matrix of the monic polynomial.
    {
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
        const double lead = poly.c[static_cast<std::size_t>(deg)];
        for (int k = 0; k < deg; ++k) comp(k, deg - 1) = -poly.c[static_cast<std::size_t>(k)] / lead;
        for (int k = 1; k < deg; ++k) comp(k, k - 1) = 1.0;
        Eigen::EigenSolver<Eigen::MatrixXd> es(comp, /*computeEigenvectors=*/false);
        const auto& ev = es.eigenvalues();
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
            const double re = ev(k).real();
            if (std::fabs(ev(k).imag()) <= 1e-7 * std::max(1.0, std::fabs(re)))
                candidates.push_back(re);
        }
    }

    // Sign-change sweep as a safety net for roots the eigensolver misplaces.
    {
        const int n_scan = 256;
        double prev_x = lo, prev_v = poly.eval(lo);
        for (int k = 1; k <= n_scan; ++k) {
            const double x = lo + (hi - lo) * k / n_scan;
            const double v = poly.eval(x);
            if ((prev_v < 0.0 && v > 0.0) || (prev_v > 0.0 && v < 0.0)) {
                double a = prev_x, b = x, fa = prev_v;
                for (int it = 0; it < 80; ++it) {
                    const double m = 0.5 * (a + b);
                    const double fm = poly.eval(m);
                    if (fm == 0.0) {
                        a = b = m;
                        break;
                    }
                    if ((fa < 0.0) != (fm < 0.0)) b = m;
                    else a = m, fa = fm;
                }
                candidates.push_back(0.5 * (a + b));
            } else if (v == 0.0) {
                candidates.push_back(x);
            }
            prev_x = x;
            prev_v = v;
        }
    }

    std::vector<double> roots;
    const double span = std::max(1.0, std::max(std::fabs(lo), std::fabs(hi)));
    for (double r : candidates) {
        if (r < lo - 1e-6 * span || r > hi + 1e-6 * span) continue;
        r = detail::polish_root(poly, r, 4);
        r = std::clamp(r, lo, hi);
        const double res_tol = 1e-9 * cmax * std::pow(std::max(1.0, std::fabs(r)), deg);
        if (std::fabs(detail::eval_compensated(poly.c, r)) > res_tol) {
            // Accept anyway if a sign change brackets it tightly.
            const double h = 1e-9 * std::max(1.0, std::fabs(r));
            const double vl = poly.eval(std::max(lo, r - h));
            const double vr = poly.eval(std::min(hi, r + h));
            if (!((vl <= 0.0 && vr >= 0.0) || (vl >= 0.0 && vr <= 0.0))) continue;
        }
        roots.push_back(r);
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [&](double a, double b) {
                                return std::fabs(a - b) <= 1e-7 * std::max(1.0, std::fabs(a));
                            }),
                roots.end());
    return roots;
}

}  // namespace mcad
