#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "conc/errors.hpp"

namespace conc {

/// Uniform 1-D grid x_i = x0 + i*h, i = 0..n-1.
struct Grid1D {
    double x0 = 0.0;
    double h = 1.0;
    std::size_t n = 0;

    double x(std::size_t i) const { return x0 + static_cast<double>(i) * h; }
    double xmax() const { return x(n - 1); }

    /// Index of the grid interval containing x, clamped to [0, n-2].
    std::size_t cell(double xq) const {
        double t = (xq - x0) / h;
        if (t <= 0.0) return 0;
        auto i = static_cast<std::size_t>(t);
        return i >= n - 1 ? n - 2 : i;
    }

    bool same(const Grid1D& o, double tol = 1e-12) const {
        return n == o.n && std::abs(x0 - o.x0) < tol && std::abs(h - o.h) < tol;
    }
};

inline void require_same_grid(const Grid1D& a, const Grid1D& b, const char* where) {
    if (!a.same(b)) throw GridMismatch(std::string(where) + ": incompatible grids");
}

/// Composite Simpson weights; n must be odd (even interval count).
/// Falls back to Simpson-3/8 closure on the last three cells when n is even.
inline std::vector<double> simpson_weights(std::size_t n, double h) {
    if (n < 3) throw GridMismatch("simpson_weights: need at least 3 nodes");
    std::vector<double> w(n, 0.0);
    std::size_t m = (n % 2 == 1) ? n : n - 3; // simpson triples end strictly below m
    for (std::size_t i = 0; i + 2 < m; i += 2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if (n % 2 == 0) {
        // 3/8 rule on the final three intervals
        w[n - 4] += 3.0 * h / 8.0;
        w[n - 3] += 9.0 * h / 8.0;
        w[n - 2] += 9.0 * h / 8.0;
        w[n - 1] += 3.0 * h / 8.0;
    }
    return w;
}

inline double integrate(const std::vector<double>& weights, const std::vector<double>& f) {
    if (weights.size() != f.size()) throw GridMismatch("integrate: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += weights[i] * f[i];
    return s;
}

/// Cubic Hermite evaluation on [xa, xb] from endpoint values and derivatives.
struct HermiteValue {
    double f, df;
};

inline HermiteValue hermite_cubic(double xa, double fa, double dfa, double xb, double fb,
                                  double dfb, double xq) {
    double L = xb - xa;
    double t = (xq - xa) / L;
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    double f = h00 * fa + h10 * L * dfa + h01 * fb + h11 * L * dfb;
    double df = (6 * t2 - 6 * t) / L * (fa - fb) + (3 * t2 - 4 * t + 1) * dfa +
                (3 * t2 - 2 * t) * dfb;
    return {f, df};
}

/// Brent root finder on [a, b]; f(a) and f(b) must have opposite signs.
inline double brent_root(const std::function<double(double)>& f, double a, double b,
                         double tol = 1e-14, int max_iter = 200) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0)) throw NoBracket("brent_root: no sign change on bracket");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if ((fb > 0) == (fc > 0)) {
            c = a; fc = fa; d = b - a; e = d;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
        double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa, p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d; d = p / q;
            } else {
                d = xm; e = d;
            }
        } else {
            d = xm; e = d;
        }
        a = b; fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
    }
    throw ToleranceNotMet("brent_root: iteration budget exhausted");
}

/// Four-point (cubic) Lagrange interpolation of uniform-grid samples.
inline double lagrange4(const Grid1D& g, const std::vector<double>& v, double xq) {
    if (v.size() != g.n || g.n < 4) throw GridMismatch("lagrange4: bad input");
    std::size_t c = g.cell(xq);
    std::size_t i = (c == 0) ? 1 : std::min(c, g.n - 3);
    double t = (xq - g.x(i)) / g.h; // in [-1, 2] nominally
    double m1 = v[i - 1], p0 = v[i], p1 = v[i + 1], p2 = v[i + 2];
    double a = -t * (t - 1.0) * (t - 2.0) / 6.0;
    double b = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    double cc = -(t + 1.0) * t * (t - 2.0) / 2.0;
    double d = (t + 1.0) * t * (t - 1.0) / 6.0;
    return a * m1 + b * p0 + cc * p1 + d * p2;
}

/// Least-squares slope of y against x (used for log-log order fits).
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw GridMismatch("fit_slope: bad input");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= x.size(); my /= y.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0) throw GridMismatch("fit_slope: degenerate abscissae");
    return sxy / sxx;
}

} // namespace conc
