#include "conc/ansatz.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "conc/errors.hpp"
#include "conc/fft.hpp"

namespace conc::ansatz {

// ===========================================================================
// Smooth cutoff
// ===========================================================================

double bump(double t) {
    if (t <= 1.0) return 1.0;
    if (t >= 2.0) return 0.0;
    const double a = 2.0 - t, b = t - 1.0;
    const double f = std::exp(-1.0 / a), g = std::exp(-1.0 / b);
    return f / (f + g);
}

double bump_d1(double t) {
    if (t <= 1.0 || t >= 2.0) return 0.0;
    const double a = 2.0 - t, b = t - 1.0;
    const double f = std::exp(-1.0 / a), g = std::exp(-1.0 / b);
    const double fp = -f / (a * a), gp = g / (b * b);
    const double q = f + g;
    return (fp * g - f * gp) / (q * q);
}

double bump_d2(double t) {
    if (t <= 1.0 || t >= 2.0) return 0.0;
    const double a = 2.0 - t, b = t - 1.0;
    const double f = std::exp(-1.0 / a), g = std::exp(-1.0 / b);
    const double fp = -f / (a * a), gp = g / (b * b);
    const double fpp = f * (1.0 - 2.0 * a) / (a * a * a * a);
    const double gpp = g * (1.0 - 2.0 * b) / (b * b * b * b);
    const double q = f + g, qp = fp + gp;
    const double wnum = fp * g - f * gp;          // numerator of the first derivative
    const double wnump = fpp * g - f * gpp;       // its derivative (middle terms cancel)
    return wnump / (q * q) - 2.0 * wnum * qp / (q * q * q);
}

// ===========================================================================
// File-local helpers
// ===========================================================================

namespace {

double spow(double x, double p) {
    return x >= 0.0 ? std::pow(x, p) : -std::pow(-x, p);
}

bool any_nonzero(const std::vector<double>& v) {
    for (double x : v)
        if (x != 0.0) return true;
    return false;
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

/// Banded stencil applied to every row.
Field2D apply_rows(const BandedMatrix& Dm, const Field2D& F) {
    Field2D out(F.gy, F.gx);
    for (std::size_t iy = 0; iy < F.ny(); ++iy) {
        auto r = Dm.apply(F.row_vec(iy));
        out.set_row(iy, r);
    }
    return out;
}

/// Spectral derivative along the periodic spine coordinate (column-wise).
Field2D apply_cols_spectral(const Field2D& F, int order) {
    Field2D out(F.gy, F.gx);
    const std::size_t ny = F.ny(), nx = F.nx();
    const double L = F.gy.h * static_cast<double>(ny);
    std::vector<double> col(ny);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) col[iy] = F.at(iy, ix);
        auto d = spectral_derivative(col, L, order);
        for (std::size_t iy = 0; iy < ny; ++iy) out.at(iy, ix) = d[iy];
    }
    return out;
}

/// Lazy power-series of fields: c[l] is the coefficient of the l-th power of
/// the expansion parameter; absent entries are identically zero.
struct Series {
    Grid1D gy, gx;
    std::vector<Field2D> c;
    std::vector<char> nz;

    Series(int M, const Grid1D& y, const Grid1D& x) : gy(y), gx(x), c(M + 1), nz(M + 1, 0) {}
    int depth() const { return static_cast<int>(c.size()) - 1; }
    void set(int l, Field2D f) {
        c[static_cast<std::size_t>(l)] = std::move(f);
        nz[static_cast<std::size_t>(l)] = 1;
    }
    Field2D& ensure(int l) {
        auto ul = static_cast<std::size_t>(l);
        if (!nz[ul]) {
            c[ul] = Field2D(gy, gx);
            nz[ul] = 1;
        }
        return c[ul];
    }
    void free_all() {
        for (auto& f : c) f = Field2D();
        std::fill(nz.begin(), nz.end(), char(0));
    }
};

/// Truncated series product.
Series s_mul(const Series& a, const Series& b, int M) {
    Series out(M, a.gy, a.gx);
    for (int l = 0; l <= M; ++l) {
        for (int i = 0; i <= l; ++i) {
            const int j = l - i;
            if (i > a.depth() || j > b.depth()) continue;
            if (!a.nz[static_cast<std::size_t>(i)] || !b.nz[static_cast<std::size_t>(j)]) continue;
            Field2D& dst = out.ensure(l);
            const double* xa = a.c[static_cast<std::size_t>(i)].v.data();
            const double* xb = b.c[static_cast<std::size_t>(j)].v.data();
            double* xo = dst.v.data();
            const std::size_t n = dst.v.size();
            for (std::size_t k = 0; k < n; ++k) xo[k] += xa[k] * xb[k];
        }
    }
    return out;
}

/// out.c[l + shift] += s * rows[iy] * a.c[l].
void s_acc_rows(Series& out, int shift, const Series& a, const std::vector<double>& rows,
                double s) {
    for (int l = 0; l + shift <= out.depth() && l <= a.depth(); ++l) {
        if (!a.nz[static_cast<std::size_t>(l)]) continue;
        Field2D& dst = out.ensure(l + shift);
        const Field2D& src = a.c[static_cast<std::size_t>(l)];
        const std::size_t ny = dst.ny(), nx = dst.nx();
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double f = s * rows[iy];
            if (f == 0.0) continue;
            double* d = dst.row(iy);
            const double* x = src.row(iy);
            for (std::size_t ix = 0; ix < nx; ++ix) d[ix] += f * x[ix];
        }
    }
}

void sym_even(std::vector<double>& x) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double m = 0.5 * (x[i] + x[n - 1 - i]);
        x[i] = m;
        x[n - 1 - i] = m;
    }
}

void sym_odd(std::vector<double>& x) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double m = 0.5 * (x[i] - x[n - 1 - i]);
        x[i] = m;
        x[n - 1 - i] = -m;
    }
}

double sup_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

double eucl_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> d1p(const std::vector<double>& f, double L) {
    return spectral_derivative(f, L, 1);
}
std::vector<double> d2p(const std::vector<double>& f, double L) {
    return spectral_derivative(f, L, 2);
}

}  // namespace

// ===========================================================================
// Transverse line toolkit
// ===========================================================================

double TransverseBasis::quad(const std::vector<double>& f) const {
    double s = 0.0;
    for (double x : f) s += x;
    return s * grid.h;
}

double TransverseBasis::inner(const std::vector<double>& f, const std::vector<double>& g) const {
    if (f.size() != g.size()) throw GridMismatch("TransverseBasis::inner: size mismatch");
    return eucl_dot(f, g) * grid.h;
}

std::vector<double> TransverseBasis::apply_D1(const std::vector<double>& f) const {
    return D1.apply(f);
}
std::vector<double> TransverseBasis::apply_D2(const std::vector<double>& f) const {
    return D2.apply(f);
}
std::vector<double> TransverseBasis::apply_L0(const std::vector<double>& f) const {
    return L0.apply(f);
}

double TransverseBasis::kernel_component(std::vector<double>& f, bool remove) const {
    const double c = inner(f, kernel) / kernel_norm2;
    if (remove)
        for (std::size_t i = 0; i < f.size(); ++i) f[i] -= c * kernel[i];
    return c;
}

double TransverseBasis::z_component(std::vector<double>& f, bool remove) const {
    const double c = inner(f, Z);  // quad(Z^2) = 1
    if (remove)
        for (std::size_t i = 0; i < f.size(); ++i) f[i] -= c * Z[i];
    return c;
}

std::vector<double> TransverseBasis::solve_deflated(std::vector<double> rhs) const {
    kernel_component(rhs, true);
    std::vector<double> x = lu->solved(rhs);
    kernel_component(x, true);
    // one step of iterative refinement
    auto Ax = L0.apply(x);
    std::vector<double> r(rhs.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - Ax[i];
    auto dx = lu->solved(r);
    kernel_component(dx, true);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
    kernel_component(x, true);
    return x;
}

std::vector<double> TransverseBasis::solve_shifted_perp(std::vector<double> rhs,
                                                        double kappa) const {
    std::uint64_t key = 0;
    static_assert(sizeof(key) == sizeof(kappa));
    std::memcpy(&key, &kappa, sizeof(key));
    auto it = shift_cache.find(key);
    if (it == shift_cache.end()) {
        BandedMatrix A = L0;
        for (std::size_t i = 0; i < grid.n; ++i) A.at(i, i) += kappa;
        it = shift_cache.emplace(key, std::make_shared<BandedLU>(std::move(A))).first;
    }
    const BandedLU& f = *it->second;
    kernel_component(rhs, true);
    z_component(rhs, true);
    std::vector<double> x = f.solved(rhs);
    kernel_component(x, true);
    z_component(x, true);
    // one refinement pass against the shifted operator
    auto Ax = L0.apply(x);
    std::vector<double> r(rhs.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - (Ax[i] + kappa * x[i]);
    auto dx = f.solved(r);
    kernel_component(dx, true);
    z_component(dx, true);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
    return x;
}

namespace {

BandedMatrix stencil_d1(const Grid1D& g) {
    BandedMatrix D(g.n, 2, 2);
    const double c1 = 8.0 / (12.0 * g.h), c2 = 1.0 / (12.0 * g.h);
    for (std::size_t i = 0; i < g.n; ++i) {
        if (i >= 2) D.at(i, i - 2) = c2;
        if (i >= 1) D.at(i, i - 1) = -c1;
        if (i + 1 < g.n) D.at(i, i + 1) = c1;
        if (i + 2 < g.n) D.at(i, i + 2) = -c2;
    }
    return D;
}

BandedMatrix stencil_d2(const Grid1D& g) {
    BandedMatrix D(g.n, 2, 2);
    const double h2 = g.h * g.h;
    const double c0 = -30.0 / (12.0 * h2), c1 = 16.0 / (12.0 * h2), c2 = -1.0 / (12.0 * h2);
    for (std::size_t i = 0; i < g.n; ++i) {
        D.at(i, i) = c0;
        if (i >= 2) D.at(i, i - 2) = c2;
        if (i >= 1) D.at(i, i - 1) = c1;
        if (i + 1 < g.n) D.at(i, i + 1) = c1;
        if (i + 2 < g.n) D.at(i, i + 2) = c2;
    }
    return D;
}

/// Shifted inverse iteration for an eigenpair of the symmetric banded matrix,
/// with a parity constraint (+1 even, -1 odd) enforced on every iterate.
struct EigOut {
    double lambda = 0.0;
    std::vector<double> vec;
    double residual = 0.0;
};

EigOut inverse_iteration(const BandedMatrix& A, double shift, int parity,
                         std::vector<double> x) {
    const std::size_t n = x.size();
    auto symmetrize = [&](std::vector<double>& v) {
        if (parity > 0)
            sym_even(v);
        else
            sym_odd(v);
    };
    auto factor_at = [&](double s) {
        BandedMatrix M = A;
        for (std::size_t i = 0; i < n; ++i) M.at(i, i) -= s;
        return BandedLU(std::move(M));
    };
    symmetrize(x);
    double lambda = shift;
    EigOut out;
    BandedLU f = factor_at(shift);
    bool refactored = false;
    for (int it = 0; it < 24; ++it) {
        x = f.solved(x);
        symmetrize(x);
        double nrm = std::sqrt(eucl_dot(x, x));
        for (auto& v : x) v /= nrm;
        auto Ax = A.apply(x);
        lambda = eucl_dot(x, Ax);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = Ax[i] - lambda * x[i];
            res += r * r;
        }
        res = std::sqrt(res);
        out.lambda = lambda;
        out.vec = x;
        out.residual = res;
        if (res < 1e-12) break;
        if (it >= 3 && !refactored) {
            f = factor_at(lambda);
            refactored = true;
        }
    }
    return out;
}

}  // namespace

TransverseBasis build_transverse_basis(const profile::GroundState& gs, const Grid1D& grid) {
    if (grid.n % 2 == 0) throw GridMismatch("transverse grid must have an odd node count");
    if (std::abs(grid.x0 + grid.xmax()) > 1e-10)
        throw GridMismatch("transverse grid must be symmetric about zero");

    TransverseBasis B;
    B.grid = grid;
    B.p = gs.prob.p;
    B.sigma = profile::sigma_exponent(gs.prob);
    const std::size_t n = grid.n;
    B.xi.resize(n);
    for (std::size_t i = 0; i < n; ++i) B.xi[i] = grid.x(i);

    B.D1 = stencil_d1(grid);
    B.D2 = stencil_d2(grid);

    // Newton refinement of the transverse profile on this grid.
    B.w.resize(n);
    for (std::size_t i = 0; i < n; ++i) B.w[i] = gs.value(std::abs(B.xi[i]));
    const double p = B.p;
    for (int it = 0; it < 40; ++it) {
        auto D2w = B.D2.apply(B.w);
        std::vector<double> F(n);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            F[i] = -D2w[i] + B.w[i] - spow(B.w[i], p);
            res = std::max(res, std::abs(F[i]));
        }
        B.newton_residual = res;
        if (res < 1e-14) break;
        BandedMatrix J(n, 2, 2);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(i + 2, n - 1); ++j)
                J.at(i, j) = -B.D2.at(i, j);
            J.at(i, i) += 1.0 - p * std::pow(std::abs(B.w[i]), p - 1.0);
        }
        BandedLU lu(std::move(J));
        for (auto& v : F) v = -v;
        auto dw = lu.solved(F);
        for (std::size_t i = 0; i < n; ++i) B.w[i] += dw[i];
        sym_even(B.w);
    }
    double wmin = B.w[0];
    for (double v : B.w) wmin = std::min(wmin, v);
    if (!(wmin > 0.0))
        throw ToleranceNotMet("transverse profile refinement lost positivity");

    B.wp = B.D1.apply(B.w);

    // Linearization matrix and its factorization.
    B.L0 = BandedMatrix(n, 2, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(i + 2, n - 1); ++j)
            B.L0.at(i, j) = -B.D2.at(i, j);
        B.L0.at(i, i) += 1.0 - p * std::pow(B.w[i], p - 1.0);
    }
    B.lu = std::make_shared<BandedLU>(B.L0);

    // Exact discrete eigenvectors: translation kernel (odd) and the
    // transverse bound state (even, eigenvalue near 1 - (p+1)^2/4).
    auto kout = inverse_iteration(B.L0, 0.0, -1, B.wp);
    B.kernel = kout.vec;
    B.kernel_residual = kout.residual;
    const double lam_guess = 1.0 - 0.25 * (p + 1.0) * (p + 1.0);
    auto zout = inverse_iteration(B.L0, lam_guess, +1, B.w);
    B.Z = zout.vec;
    B.lambda0 = zout.lambda;
    B.z_residual = zout.residual;

    // Normalizations: quad(Z^2) = 1 with positive center value; the kernel is
    // scaled so that <kernel, wp> = <wp, wp> = c0 (projections against the
    // kernel then read off coefficients of wp directly).
    {
        double zn = std::sqrt(B.inner(B.Z, B.Z));
        for (auto& v : B.Z) v /= zn;
        if (B.Z[n / 2] < 0.0)
            for (auto& v : B.Z) v = -v;
        B.c0 = B.inner(B.wp, B.wp);
        const double kw = B.inner(B.kernel, B.wp);
        if (std::abs(kw) < 1e-12 * B.c0)
            throw ToleranceNotMet("kernel vector is orthogonal to the profile derivative");
        const double s = B.c0 / kw;
        for (auto& v : B.kernel) v *= s;
        B.kernel_norm2 = B.inner(B.kernel, B.kernel);
    }

    // Companion profiles: L0 U0 = w (even), L0 U1 = w' + sigma^{-1} xi w (odd).
    B.U0 = B.solve_deflated(B.w);
    sym_even(B.U0);
    {
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = B.wp[i] + B.xi[i] * B.w[i] / B.sigma;
        B.U1 = B.solve_deflated(rhs);
        sym_odd(B.U1);
    }
    return B;
}

// ===========================================================================
// Closed-form normal Taylor data and warp series
// ===========================================================================

NormalTaylor normal_taylor(const pot::PotentialModel& model,
                           const geom::FermiChart& chart, int order) {
    if (chart.N != 1)
        throw UnsupportedManifold("normal Taylor tables are implemented for codimension one");
    if (order < 2) order = 2;
    NormalTaylor out;
    out.order = order;
    const std::size_t ny = chart.ybar.n;
    out.T.assign(static_cast<std::size_t>(order) + 1, std::vector<double>(ny, 0.0));

    const bool curved = chart.ambient.kappa > 0.0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double yb = chart.ybar.x(iy);
        const auto z0 = chart.ambient_point(yb, {0.0});
        const auto frame = chart.frame(yb);
        const auto& E = frame[1];  // unit normal
        double beta = 0.0, zz = 0.0;
        for (std::size_t c = 0; c < z0.size(); ++c) {
            beta += z0[c] * E[c];
            zz += z0[c] * z0[c];
        }
        switch (model.kind) {
            case pot::PotentialKind::constant:
                out.T[0][iy] = model.param;
                break;
            case pot::PotentialKind::gaussian_floored: {
                if (curved) {
                    // Radial potential restricted to a geodesic sphere: all
                    // normal derivatives along E vanish by symmetry.
                    out.T[0][iy] = model.value(z0);
                    break;
                }
                const double g0 = std::exp(-0.5 * zz);
                out.T[0][iy] = model.param + g0;
                std::vector<double> g(static_cast<std::size_t>(order) + 1, 0.0);
                g[0] = g0;
                if (order >= 1) g[1] = -beta * g0;
                for (int m = 1; m < order; ++m)
                    g[static_cast<std::size_t>(m) + 1] =
                        -beta * g[static_cast<std::size_t>(m)] -
                        static_cast<double>(m) * g[static_cast<std::size_t>(m) - 1];
                for (int m = 1; m <= order; ++m)
                    out.T[static_cast<std::size_t>(m)][iy] = g[static_cast<std::size_t>(m)];
                break;
            }
            case pot::PotentialKind::polynomial: {
                if (curved) {
                    out.T[0][iy] = model.value(z0);
                    break;
                }
                out.T[0][iy] = 1.0 + zz;
                if (order >= 1) out.T[1][iy] = 2.0 * beta;
                if (order >= 2) out.T[2][iy] = 2.0;
                break;
            }
        }
    }

    // Warp factor series A(t) = 1 + sum b_m t^m:
    //   drift stores a_m with A'/A = sum a_m t^m, inv_sq stores b_m with
    //   A^{-2} = sum b_m t^m.
    out.drift.assign(static_cast<std::size_t>(order) + 1, 0.0);
    out.inv_sq.assign(static_cast<std::size_t>(order) + 1, 0.0);
    switch (chart.kind) {
        case geom::ChartKind::straight_line:
            out.inv_sq[0] = 1.0;
            break;
        case geom::ChartKind::circle_in_plane: {
            const double r = chart.radius;
            double s = 1.0;
            for (int m = 0; m <= order; ++m) {
                // A = 1 + t/r: A'/A = (1/r) sum (-1/r)^m t^m,
                //              A^{-2} = sum (m+1)(-1/r)^m t^m.
                out.drift[static_cast<std::size_t>(m)] = s / r;
                out.inv_sq[static_cast<std::size_t>(m)] = (m + 1.0) * s;
                s *= -1.0 / r;
            }
            break;
        }
        case geom::ChartKind::great_circle: {
            const double rho = 1.0 / std::sqrt(chart.ambient.kappa);
            // A = cos(t/rho): A'/A = -(1/rho) tan(t/rho), A^{-2} = sec^2(t/rho).
            static const double tan_c[5] = {1.0, 1.0 / 3.0, 2.0 / 15.0, 17.0 / 315.0,
                                            62.0 / 2835.0};
            static const double sec2_c[5] = {1.0, 1.0, 2.0 / 3.0, 17.0 / 45.0, 62.0 / 315.0};
            for (int j = 0; j < 5; ++j) {
                const int mo = 2 * j + 1;  // odd powers for tan
                const int me = 2 * j;      // even powers for sec^2
                if (mo <= order)
                    out.drift[static_cast<std::size_t>(mo)] =
                        -tan_c[j] / std::pow(rho, mo + 1);
                if (me <= order)
                    out.inv_sq[static_cast<std::size_t>(me)] = sec2_c[j] / std::pow(rho, me);
            }
            break;
        }
    }
    return out;
}

// ===========================================================================
// AnsatzContext
// ===========================================================================

double AnsatzContext::exact_V(std::size_t iy, double xbar) const {
    if (exact_potential) {
        const auto z = chart.ambient_point(chart.ybar.x(iy), {xbar});
        return model.value(z);
    }
    // Synthetic mode: evaluate the stored Taylor table as a polynomial.
    double acc = 0.0, fact = 1.0;
    double pw = 1.0;
    for (int m = 0; m <= tay.order; ++m) {
        if (m > 0) {
            fact *= static_cast<double>(m);
            pw *= xbar;
        }
        acc += tay.T[static_cast<std::size_t>(m)][iy] * pw / fact;
    }
    return acc;
}

double AnsatzContext::warp(double t) const {
    switch (chart.kind) {
        case geom::ChartKind::straight_line:
            return 1.0;
        case geom::ChartKind::circle_in_plane:
            return 1.0 + t / chart.radius;
        case geom::ChartKind::great_circle:
            return std::cos(t * std::sqrt(chart.ambient.kappa));
    }
    return 1.0;
}

double AnsatzContext::warp_ratio(double t) const {
    switch (chart.kind) {
        case geom::ChartKind::straight_line:
            return 0.0;
        case geom::ChartKind::circle_in_plane:
            return 1.0 / (chart.radius + t);
        case geom::ChartKind::great_circle: {
            const double s = std::sqrt(chart.ambient.kappa);
            return -s * std::tan(t * s);
        }
    }
    return 0.0;
}

void AnsatzContext::refresh_tangential() {
    const std::size_t ny = gy.n;
    const double L = gy.h * static_cast<double>(ny);
    mu.resize(ny);
    hh.resize(ny);
    const double pexp = 1.0 / (p - 1.0);
    for (std::size_t i = 0; i < ny; ++i) {
        mu[i] = std::sqrt(V0[i]);
        hh[i] = std::pow(V0[i], pexp);
    }
    dmu = d1p(mu, L);
    ddmu = d2p(mu, L);
    auto dh = d1p(hh, L);
    auto ddh = d2p(hh, L);
    dloh.resize(ny);
    ddloh.resize(ny);
    for (std::size_t i = 0; i < ny; ++i) {
        dloh[i] = dh[i] / hh[i];
        ddloh[i] = ddh[i] / hh[i];
    }
    double vmax = 0.0;
    stationary_sup = 0.0;
    for (std::size_t i = 0; i < ny; ++i) {
        const double t1 = tay.T[1][i];
        stationary_sup = std::max(stationary_sup, std::abs(sigma * t1 + V0[i] * Hvec[i]));
        vmax = std::max(vmax, V0[i]);
    }
    tol_stationary = 1e-8 * std::max(restr.V2, vmax);
}

AnsatzContext make_context(const geom::FermiChart& chart, const pot::PotentialModel& model,
                           double p, int taylor_order, const Grid1D* xi_grid) {
    if (chart.N != 1)
        throw UnsupportedManifold("the expansion engine requires codimension one");
    AnsatzContext ctx;
    ctx.chart = chart;
    ctx.model = model;
    ctx.p = p;
    profile::LimitProblem prob;
    prob.N = 1;
    prob.p = p;
    ctx.sigma = profile::sigma_exponent(prob);

    ctx.restr = pot::restrict_to_chart(model, chart, p);
    ctx.gy = chart.ybar;

    Grid1D gx;
    if (xi_grid) {
        gx = *xi_grid;
    } else {
        const double half = 20.0, h = 0.02;
        const auto n = static_cast<std::size_t>(std::lround(2.0 * half / h)) + 1;
        gx = Grid1D{-half, h, n};
    }
    ctx.gxi = gx;

    auto gs = profile::solve_ground_state(prob);
    ctx.line = build_transverse_basis(gs, gx);

    ctx.tay = normal_taylor(model, chart, taylor_order);
    const std::size_t ny = ctx.gy.n;
    ctx.V0.resize(ny);
    for (std::size_t i = 0; i < ny; ++i) ctx.V0[i] = ctx.tay.T[0][i];
    ctx.Gamma.assign(ny, chart.gamma.at(0));
    ctx.Hvec.assign(ny, chart.H.at(0));
    ctx.exact_potential = true;
    ctx.refresh_tangential();

    ctx.jac = kops::assemble_jacobi(chart, ctx.restr);
    ctx.jac_min_abs_eig = kops::nondegeneracy_check(ctx.jac);
    ctx.jac_ok = ctx.jac_min_abs_eig > ctx.jac_tol_nd;
    return ctx;
}

// ===========================================================================
// Power-series expansion engine
// ===========================================================================

namespace {

/// out.c[l + shift] += s * a.c[l].
void s_acc_scalar(Series& out, int shift, const Series& a, double s) {
    for (int l = 0; l + shift <= out.depth() && l <= a.depth(); ++l) {
        if (!a.nz[static_cast<std::size_t>(l)]) continue;
        out.ensure(l + shift).axpy(s, a.c[static_cast<std::size_t>(l)]);
    }
}

/// The interior equation applied to the expansion state, order by order in the
/// scaling parameter.  Returns the series of loads R.c[0..M]: R.c[l] is the
/// coefficient that the corrections at order l must cancel (up to the retained
/// amplitude term when subtract_mode is set).  The state may be partially
/// built: missing corrections and sections are treated as zero.
Series engine_flow(const AnsatzContext& ctx, const AnsatzExpansion& X, int M,
                   bool subtract_mode) {
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const TransverseBasis& B = ctx.line;
    const std::size_t ny = gy.n;
    const double L = gy.h * static_cast<double>(ny);
    const double p = ctx.p;

    const bool has_e = !X.e.empty() && any_nonzero(X.e);

    // Per-node helper tables.
    std::vector<double> inv_mu(ny), inv_mu2(ny), dlomu(ny), dlomu_p(ny);
    for (std::size_t i = 0; i < ny; ++i) {
        inv_mu[i] = 1.0 / ctx.mu[i];
        inv_mu2[i] = inv_mu[i] * inv_mu[i];
        dlomu[i] = ctx.dmu[i] * inv_mu[i];
        dlomu_p[i] = (ctx.ddmu[i] * ctx.mu[i] - ctx.dmu[i] * ctx.dmu[i]) * inv_mu2[i];
    }
    std::vector<std::vector<double>> dPhi, ddPhi;
    dPhi.resize(X.Phi.size());
    ddPhi.resize(X.Phi.size());
    for (std::size_t j = 0; j < X.Phi.size(); ++j) {
        if (!X.Phi[j].empty() && any_nonzero(X.Phi[j])) {
            dPhi[j] = d1p(X.Phi[j], L);
            ddPhi[j] = d2p(X.Phi[j], L);
        }
    }
    auto phi_at = [&](std::size_t j, std::size_t iy) -> double {
        return (j < X.Phi.size() && !X.Phi[j].empty()) ? X.Phi[j][iy] : 0.0;
    };

    // ---- profile series v ----
    Series v(M, gy, gx);
    v.set(0, from_line(gy, gx, B.w));
    if (M >= 1) {
        Field2D f1 = (!X.w.empty() && !X.w[0].v.empty()) ? X.w[0] : Field2D(gy, gx);
        if (has_e) {
            for (std::size_t iy = 0; iy < ny; ++iy) {
                double* r = f1.row(iy);
                const double ee = X.e[iy];
                for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] += ee * B.Z[ix];
            }
        }
        v.set(1, std::move(f1));
    }
    for (int l = 2; l <= M; ++l) {
        const auto ul = static_cast<std::size_t>(l - 1);
        if (ul < X.w.size() && !X.w[ul].v.empty()) v.set(l, X.w[ul]);
    }

    // ---- transverse derivatives ----
    Series vx(M, gy, gx), vxx(M, gy, gx);
    for (int l = 0; l <= M; ++l)
        if (v.nz[static_cast<std::size_t>(l)]) {
            vx.set(l, apply_rows(B.D1, v.c[static_cast<std::size_t>(l)]));
            vxx.set(l, apply_rows(B.D2, v.c[static_cast<std::size_t>(l)]));
        }

    // ---- linear transverse part: -v_xx + v ----
    Series R(M, gy, gx);
    for (int l = 0; l <= M; ++l)
        if (v.nz[static_cast<std::size_t>(l)]) {
            Field2D& dst = R.ensure(l);
            dst += v.c[static_cast<std::size_t>(l)];
            dst -= vxx.c[static_cast<std::size_t>(l)];
        }

    // ---- nonlinearity |v|^{p-1} v by the power recursion ----
    {
        Series f(M, gy, gx);
        std::vector<double> f0(gx.n);
        for (std::size_t ix = 0; ix < gx.n; ++ix) f0[ix] = spow(B.w[ix], p);
        f.set(0, from_line(gy, gx, f0));
        R.ensure(0) -= f.c[0];
        for (int m = 1; m <= M; ++m) {
            Field2D acc(gy, gx);
            bool any = false;
            for (int i = 1; i <= m; ++i) {
                const int k = m - i;
                if (!v.nz[static_cast<std::size_t>(i)] || !f.nz[static_cast<std::size_t>(k)])
                    continue;
                any = true;
                const double coef = p * static_cast<double>(i) - static_cast<double>(k);
                const double* xv = v.c[static_cast<std::size_t>(i)].v.data();
                const double* xf = f.c[static_cast<std::size_t>(k)].v.data();
                double* xo = acc.v.data();
                for (std::size_t q = 0; q < acc.v.size(); ++q) xo[q] += coef * xv[q] * xf[q];
            }
            if (!any) continue;
            const double dm = static_cast<double>(m);
            for (std::size_t iy = 0; iy < ny; ++iy) {
                double* r = acc.row(iy);
                for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] /= dm * B.w[ix];
            }
            f.set(m, std::move(acc));
            R.ensure(m) -= f.c[static_cast<std::size_t>(m)];
        }
    }

    // ---- Fermi-coordinate series: x(eps) = eps (xi/mu + Phi(eps)) ----
    Series Y(M, gy, gx);
    if (M >= 1) {
        Field2D y1(gy, gx);
        for (std::size_t iy = 0; iy < ny; ++iy) {
            double* r = y1.row(iy);
            const double ph = phi_at(0, iy);
            for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] = B.xi[ix] * inv_mu[iy] + ph;
        }
        Y.set(1, std::move(y1));
    }
    for (int j = 2; j <= M; ++j) {
        const auto uj = static_cast<std::size_t>(j - 1);
        if (uj < X.Phi.size() && !X.Phi[uj].empty() && any_nonzero(X.Phi[uj]))
            Y.set(j, from_tangent(gy, gx, X.Phi[uj]));
    }
    std::vector<Series> Yp;
    Yp.reserve(static_cast<std::size_t>(M) + 1);
    for (int m = 0; m <= M; ++m) {
        if (m == 0)
            Yp.emplace_back(0, gy, gx);  // placeholder, never used
        else if (m == 1)
            Yp.push_back(Y);
        else
            Yp.push_back(s_mul(Yp.back(), Y, M));
    }

    // ---- potential block: mu^{-2} (V(x(eps)) - V0) v ----
    if (M >= 1) {
        Series VS(M, gy, gx);
        double fact = 1.0;
        for (int m = 1; m <= std::min(ctx.tay.order, M); ++m) {
            fact *= static_cast<double>(m);
            s_acc_rows(VS, 0, Yp[static_cast<std::size_t>(m)],
                       ctx.tay.T[static_cast<std::size_t>(m)], 1.0 / fact);
        }
        Series Vv = s_mul(VS, v, M);
        s_acc_rows(R, 0, Vv, inv_mu2, 1.0);
    }

    // ---- drift block: -eps (A'/A)(x(eps)) mu^{-1} v_xi ----
    if (M >= 1) {
        Series vxm(M - 1, gy, gx);
        s_acc_rows(vxm, 0, vx, inv_mu, 1.0);
        const double a0 = ctx.tay.drift.empty() ? 0.0 : ctx.tay.drift[0];
        if (a0 != 0.0) s_acc_scalar(R, 1, vxm, -a0);
        const int ma = std::min(static_cast<int>(ctx.tay.drift.size()) - 1, M - 1);
        if (ma >= 1) {
            Series Ar(M - 1, gy, gx);
            bool anya = false;
            for (int m = 1; m <= ma; ++m)
                if (ctx.tay.drift[static_cast<std::size_t>(m)] != 0.0) {
                    s_acc_scalar(Ar, 0, Yp[static_cast<std::size_t>(m)],
                                 ctx.tay.drift[static_cast<std::size_t>(m)]);
                    anya = true;
                }
            if (anya) {
                Series P = s_mul(Ar, vxm, M - 1);
                s_acc_scalar(R, 1, P, -1.0);
            }
        }
    }

    // ---- warp block: -eps^2 A^{-2} mu^{-2} [tangential bracket] ----
    if (M >= 2) {
        const int MB = M - 2;
        Series D(MB, gy, gx), Dy(MB, gy, gx);
        {
            Field2D d0(gy, gx), dy0(gy, gx);
            for (std::size_t iy = 0; iy < ny; ++iy) {
                double* rd = d0.row(iy);
                double* ry = dy0.row(iy);
                const double dp0 = dPhi.empty() || dPhi[0].empty() ? 0.0 : dPhi[0][iy];
                const double ddp0 = ddPhi.empty() || ddPhi[0].empty() ? 0.0 : ddPhi[0][iy];
                for (std::size_t ix = 0; ix < gx.n; ++ix) {
                    rd[ix] = dlomu[iy] * B.xi[ix] - ctx.mu[iy] * dp0;
                    ry[ix] = dlomu_p[iy] * B.xi[ix] - ctx.dmu[iy] * dp0 - ctx.mu[iy] * ddp0;
                }
            }
            D.set(0, std::move(d0));
            Dy.set(0, std::move(dy0));
        }
        for (int m = 1; m <= MB; ++m) {
            const auto um = static_cast<std::size_t>(m);
            if (um < dPhi.size() && !dPhi[um].empty()) {
                std::vector<double> td(ny), ty(ny);
                for (std::size_t iy = 0; iy < ny; ++iy) {
                    td[iy] = -ctx.mu[iy] * dPhi[um][iy];
                    ty[iy] = -ctx.dmu[iy] * dPhi[um][iy] - ctx.mu[iy] * ddPhi[um][iy];
                }
                D.set(m, from_tangent(gy, gx, td));
                Dy.set(m, from_tangent(gy, gx, ty));
            }
        }

        Series Bs(MB, gy, gx);
        s_acc_rows(Bs, 0, v, ctx.ddloh, 1.0);
        {
            Series vy(MB, gy, gx);
            for (int l = 0; l <= MB; ++l)
                if (v.nz[static_cast<std::size_t>(l)])
                    vy.set(l, apply_cols_spectral(v.c[static_cast<std::size_t>(l)], 1));
            s_acc_rows(Bs, 0, vy, ctx.dloh, 2.0);
            Series vxy(MB, gy, gx);
            for (int l = 0; l <= MB; ++l)
                if (vy.nz[static_cast<std::size_t>(l)])
                    vxy.set(l, apply_rows(B.D1, vy.c[static_cast<std::size_t>(l)]));
            Series t = s_mul(vxy, D, MB);
            s_acc_scalar(Bs, 0, t, 2.0);
        }
        {
            Series vyy(MB, gy, gx);
            for (int l = 0; l <= MB; ++l)
                if (v.nz[static_cast<std::size_t>(l)])
                    vyy.set(l, apply_cols_spectral(v.c[static_cast<std::size_t>(l)], 2));
            s_acc_scalar(Bs, 0, vyy, 1.0);
        }
        {
            Series SD = s_mul(vx, D, MB);
            s_acc_rows(Bs, 0, SD, ctx.dloh, 2.0);
        }
        {
            Series DD = s_mul(D, D, MB);
            Series t = s_mul(vxx, DD, MB);
            s_acc_scalar(Bs, 0, t, 1.0);
        }
        {
            Series E(MB, gy, gx);
            s_acc_scalar(E, 0, Dy, 1.0);
            s_acc_rows(E, 0, D, dlomu, 1.0);
            Series t = s_mul(vx, E, MB);
            s_acc_scalar(Bs, 0, t, 1.0);
        }

        const double b0 = ctx.tay.inv_sq.empty() ? 1.0 : ctx.tay.inv_sq[0];
        {
            Series tmp(MB, gy, gx);
            s_acc_scalar(tmp, 0, Bs, b0);
            const int mb = std::min(static_cast<int>(ctx.tay.inv_sq.size()) - 1, MB);
            if (mb >= 1) {
                Series Br(MB, gy, gx);
                bool anyb = false;
                for (int m = 1; m <= mb; ++m)
                    if (ctx.tay.inv_sq[static_cast<std::size_t>(m)] != 0.0) {
                        s_acc_scalar(Br, 0, Yp[static_cast<std::size_t>(m)],
                                     ctx.tay.inv_sq[static_cast<std::size_t>(m)]);
                        anyb = true;
                    }
                if (anyb) {
                    Series P2 = s_mul(Br, Bs, MB);
                    s_acc_scalar(tmp, 0, P2, 1.0);
                }
            }
            s_acc_rows(R, 2, tmp, inv_mu2, -1.0);
        }
    }

    // ---- retained amplitude term ----
    if (subtract_mode && has_e) {
        if (M >= 1) {
            Field2D& dst = R.ensure(1);
            for (std::size_t iy = 0; iy < ny; ++iy) {
                const double c = B.lambda0 * X.e[iy];
                double* r = dst.row(iy);
                for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] -= c * B.Z[ix];
            }
        }
        if (M >= 3) {
            auto dde = d2p(X.e, L);
            Field2D& dst = R.ensure(3);
            for (std::size_t iy = 0; iy < ny; ++iy) {
                const double c = dde[iy] * inv_mu2[iy];
                double* r = dst.row(iy);
                for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] += c * B.Z[ix];
            }
        }
    }
    return R;
}

/// Kernel projection of a load field, node by node.
std::vector<double> project_kernel(const TransverseBasis& B, const Series& R, int l) {
    const std::size_t ny = R.gy.n;
    std::vector<double> d(ny, 0.0);
    if (l > R.depth() || !R.nz[static_cast<std::size_t>(l)]) return d;
    const Field2D& F = R.c[static_cast<std::size_t>(l)];
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double* r = F.row(iy);
        double s = 0.0;
        for (std::size_t ix = 0; ix < F.nx(); ++ix) s += r[ix] * B.kernel[ix];
        d[iy] = s * B.grid.h;
    }
    return d;
}

struct RowSolve {
    Field2D x;
    double residual = 0.0;
};

/// Row-by-row deflated solve of L0 x = -load.
RowSolve solve_rows_neg(const TransverseBasis& B, const Series& R, int l) {
    RowSolve out;
    out.x = Field2D(R.gy, R.gx);
    if (l > R.depth() || !R.nz[static_cast<std::size_t>(l)]) return out;
    const Field2D& F = R.c[static_cast<std::size_t>(l)];
    for (std::size_t iy = 0; iy < F.ny(); ++iy) {
        auto rhs = F.row_vec(iy);
        for (auto& vv : rhs) vv = -vv;
        B.kernel_component(rhs, true);
        auto x = B.solve_deflated(rhs);
        auto Ax = B.apply_L0(x);
        double res = 0.0;
        for (std::size_t ix = 0; ix < rhs.size(); ++ix)
            res = std::max(res, std::abs(Ax[ix] - rhs[ix]));
        out.residual = std::max(out.residual, res);
        out.x.set_row(iy, x);
    }
    return out;
}

double sup_field(const Series& R, int l) {
    if (l > R.depth() || !R.nz[static_cast<std::size_t>(l)]) return 0.0;
    return R.c[static_cast<std::size_t>(l)].max_abs();
}

/// Attach the section-coupled part of the correction at the order owning
/// section Phi: w = w_base + (-T1 Phi / mu^2) U0 per node.
void attach_section_part(const AnsatzContext& ctx, Field2D& w, const Field2D& w_base,
                         const std::vector<double>& Phi) {
    const std::size_t ny = ctx.gy.n, nx = ctx.gxi.n;
    w = w_base;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double c = -ctx.tay.T[1][iy] * Phi[iy] / (ctx.mu[iy] * ctx.mu[iy]);
        if (c == 0.0) continue;
        double* r = w.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) r[ix] += c * ctx.line.U0[ix];
    }
}

}  // namespace

// ===========================================================================
// Stage builders
// ===========================================================================

std::vector<double> order1_defect(const AnsatzContext& ctx) {
    AnsatzExpansion X;
    X.p = ctx.p;
    X.sigma = ctx.sigma;
    Series R = engine_flow(ctx, X, 1, true);
    return project_kernel(ctx.line, R, 1);
}

Order1Result build_order1(const AnsatzContext& ctx) {
    if (ctx.stationary_sup > ctx.tol_stationary) {
        std::ostringstream os;
        os << "first-order solvability fails: the spine is not stationary "
           << "(sup |sigma dV + V H| = " << ctx.stationary_sup << " exceeds "
           << ctx.tol_stationary << ")";
        throw FredholmViolation(os.str());
    }
    AnsatzExpansion X;
    X.p = ctx.p;
    X.sigma = ctx.sigma;
    Series R = engine_flow(ctx, X, 1, true);

    Order1Result out;
    out.defect = project_kernel(ctx.line, R, 1);
    out.defect_sup = sup_abs(out.defect);
    double mu_min = ctx.mu[0];
    for (double m : ctx.mu) mu_min = std::min(mu_min, m);
    // The additive floor is the discretization level of the projection
    // identity (the exact discrete kernel differs from the smooth weight at
    // the stencil order), far above rounding but far below any actual
    // stationarity failure.
    const double bound = 2.0 * ctx.line.c0 * ctx.stationary_sup / (mu_min * mu_min * mu_min) +
                         1e-7 * std::max(1.0, sup_field(R, 1));
    if (out.defect_sup > bound) {
        std::ostringstream os;
        os << "first-order kernel load " << out.defect_sup
           << " is inconsistent with the stationarity defect (bound " << bound << ")";
        throw FredholmViolation(os.str());
    }

    auto sol = solve_rows_neg(ctx.line, R, 1);
    out.w11 = std::move(sol.x);

    // Closed-form comparison: w11 = -mu^{-1} Gamma U1.
    double gap = 0.0;
    for (std::size_t iy = 0; iy < ctx.gy.n; ++iy) {
        const double c = -ctx.Gamma[iy] / ctx.mu[iy];
        const double* r = out.w11.row(iy);
        for (std::size_t ix = 0; ix < ctx.gxi.n; ++ix)
            gap = std::max(gap, std::abs(r[ix] - c * ctx.line.U1[ix]));
    }
    out.formula_gap = gap;
    return out;
}

AnsatzExpansion build_higher(const AnsatzContext& ctx, const BuildOptions& opts) {
    const int I = opts.I;
    if (I < 1 || I > 4)
        throw BoundViolation("construction order must lie between 1 and 4");
    const std::size_t ny = ctx.gy.n;
    if (!opts.e.empty() && opts.e.size() != ny)
        throw GridMismatch("amplitude section size does not match the spine grid");
    if (!opts.Phi_top.empty() && opts.Phi_top.size() != ny)
        throw GridMismatch("free section size does not match the spine grid");
    if (ctx.stationary_sup > ctx.tol_stationary) {
        std::ostringstream os;
        os << "construction requires a stationary spine: sup |sigma dV + V H| = "
           << ctx.stationary_sup << " exceeds " << ctx.tol_stationary;
        throw FredholmViolation(os.str());
    }

    AnsatzExpansion X;
    X.I = I;
    X.p = ctx.p;
    X.sigma = ctx.sigma;
    X.w.assign(static_cast<std::size_t>(I), Field2D());
    X.w_base.assign(static_cast<std::size_t>(I), Field2D());
    X.Phi.assign(static_cast<std::size_t>(I), zeros(ny));
    X.e = opts.e.empty() ? zeros(ny) : opts.e;
    X.defect.assign(static_cast<std::size_t>(I), 0.0);
    X.defect_final.assign(static_cast<std::size_t>(I), 0.0);
    X.solve_residual.assign(static_cast<std::size_t>(I), 0.0);

    const TransverseBasis& B = ctx.line;
    const double c0 = B.c0;

    for (int j = 1; j <= I; ++j) {
        Series R = engine_flow(ctx, X, j, true);
        auto d = project_kernel(B, R, j);
        const double loadscale = std::max(1.0, sup_field(R, j));
        X.defect[static_cast<std::size_t>(j - 1)] = sup_abs(d);

        if (j >= 2) {
            const auto js = static_cast<std::size_t>(j - 2);
            const double target = opts.tol_project * loadscale;
            const double floor_ok = std::max(target, 1e-9 * loadscale);
            double prev = sup_abs(d);
            int stall = 0;
            for (int it = 0; it < opts.max_iter && sup_abs(d) > target; ++it) {
                if (!ctx.jac_ok) {
                    if (sup_abs(d) <= floor_ok) break;
                    std::ostringstream os;
                    os << "normal-variation operator is degenerate (min |eig| = "
                       << ctx.jac_min_abs_eig << ") but the order-" << j
                       << " solvability load " << sup_abs(d) << " requires a nonzero section";
                    throw DegenerateOperator(os.str());
                }
                std::vector<double> rhs(ny);
                for (std::size_t iy = 0; iy < ny; ++iy)
                    rhs[iy] = -(ctx.mu[iy] / c0) * d[iy];
                auto inv = kops::invert_jacobi(ctx.jac, rhs, ctx.jac_tol_nd);
                for (std::size_t iy = 0; iy < ny; ++iy) X.Phi[js][iy] += inv.Phi[iy];
                attach_section_part(ctx, X.w[js], X.w_base[js], X.Phi[js]);
                R = engine_flow(ctx, X, j, true);
                d = project_kernel(B, R, j);
                const double cur = sup_abs(d);
                if (cur > 0.5 * prev) {
                    if (++stall >= 2) break;
                } else {
                    stall = 0;
                }
                prev = cur;
            }
            X.defect_final[static_cast<std::size_t>(j - 1)] = sup_abs(d);
            if (X.defect_final[static_cast<std::size_t>(j - 1)] >
                std::max(4.0 * target, ctx.jac_ok ? 0.0 : floor_ok)) {
                std::ostringstream os;
                os << "solvability iteration stalled at order " << j << ": kernel load "
                   << X.defect_final[static_cast<std::size_t>(j - 1)] << " (target " << target
                   << ")";
                throw FredholmViolation(os.str());
            }
        } else {
            X.defect_final[0] = X.defect[0];
        }

        auto sol = solve_rows_neg(B, R, j);
        X.solve_residual[static_cast<std::size_t>(j - 1)] = sol.residual;
        X.w[static_cast<std::size_t>(j - 1)] = std::move(sol.x);
        X.w_base[static_cast<std::size_t>(j - 1)] = X.w[static_cast<std::size_t>(j - 1)];
    }

    if (opts.compute_top) {
        Series R = engine_flow(ctx, X, I + 1, true);
        auto d = project_kernel(B, R, I + 1);
        X.top_rhs.resize(ny);
        for (std::size_t iy = 0; iy < ny; ++iy) X.top_rhs[iy] = -(ctx.mu[iy] / c0) * d[iy];
        if (ctx.jac_ok) {
            auto inv = kops::invert_jacobi(ctx.jac, X.top_rhs, ctx.jac_tol_nd);
            X.top_section = inv.Phi;
        }
    }

    if (!opts.Phi_top.empty() && any_nonzero(opts.Phi_top)) {
        X.Phi[static_cast<std::size_t>(I - 1)] = opts.Phi_top;
        attach_section_part(ctx, X.w[static_cast<std::size_t>(I - 1)],
                            X.w_base[static_cast<std::size_t>(I - 1)],
                            X.Phi[static_cast<std::size_t>(I - 1)]);
    }

    X.tau = decay_rate(X.w[static_cast<std::size_t>(I - 1)], 8.0,
                       std::min(16.0, ctx.gxi.xmax() - 2.0));
    return X;
}

// ===========================================================================
// Explicit second-order displays
// ===========================================================================

Order2Terms order2_terms(const AnsatzContext& ctx, const Field2D& w1_base,
                         const std::vector<double>& Phi0, const std::vector<double>& e) {
    if (ctx.chart.ambient.kappa != 0.0)
        throw UnsupportedManifold(
            "explicit second-order displays are assembled for flat ambient charts only");
    const TransverseBasis& B = ctx.line;
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const std::size_t ny = gy.n, nx = gx.n;
    const double L = gy.h * static_cast<double>(ny);
    const double p = ctx.p;
    const double pp = p * (p - 1.0);

    const std::vector<double> phi = Phi0.empty() ? zeros(ny) : Phi0;
    const std::vector<double> ee = e.empty() ? zeros(ny) : e;
    auto dphi = d1p(phi, L);
    auto ddphi = d2p(phi, L);

    auto wpp = B.apply_D2(B.w);
    auto Zp = B.apply_D1(B.Z);
    auto U0p = B.apply_D1(B.U0);
    std::vector<double> wpm2(nx);
    for (std::size_t ix = 0; ix < nx; ++ix) wpm2[ix] = std::pow(B.w[ix], p - 2.0);

    Order2Terms out;
    out.base = Field2D(gy, gx);
    out.linear = Field2D(gy, gx);
    out.quadratic = Field2D(gy, gx);
    out.mode = Field2D(gy, gx);

    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double mu = ctx.mu[iy], mu2 = mu * mu, mu3 = mu2 * mu, mu4 = mu2 * mu2;
        const double dmu = ctx.dmu[iy], ddmu = ctx.ddmu[iy];
        const double dlh = ctx.dloh[iy], ddlh = ctx.ddloh[iy];
        const double G = ctx.Gamma[iy];
        const double T1 = ctx.tay.T[1][iy], T2 = ctx.tay.T[2][iy];
        const double Ph = phi[iy], Php = dphi[iy], Phpp = ddphi[iy];
        const double ev = ee[iy];

        auto w11 = w1_base.row_vec(iy);
        auto D1w11 = B.apply_D1(w11);
        const double c12 = -T1 * Ph / mu2;  // w12 = c12 U0 per node

        double* rb = out.base.row(iy);
        double* rl = out.linear.row(iy);
        double* rq = out.quadratic.row(iy);
        double* rm = out.mode.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double xv = B.xi[ix], wv = B.w[ix], wpv = B.wp[ix], wppv = wpp[ix];
            const double w11v = w11[ix], w12v = c12 * B.U0[ix];

            rb[ix] = (G / mu) * D1w11[ix] + (G * G / mu2) * xv * wpv -
                     (ddmu / mu3) * xv * wpv - (ddlh / mu2) * wv -
                     2.0 * dlh * (dmu / mu3) * xv * wpv - (dmu * dmu / mu4) * xv * xv * wppv +
                     (T1 / mu3) * xv * w11v + 0.5 * (T2 / mu4) * xv * xv * wv -
                     0.5 * pp * wpm2[ix] * w11v * w11v;

            rl[ix] = (G / mu) * c12 * U0p[ix] + (G * G / mu) * Ph * wpv +
                     (2.0 * dmu * Php + mu * Phpp) / mu2 * wpv + 2.0 * dlh * (Php / mu) * wpv +
                     2.0 * (dmu / mu2) * Php * xv * wppv + (T1 / mu3) * xv * w12v +
                     (T1 / mu2) * Ph * w11v + (T2 / mu3) * Ph * xv * wv -
                     pp * wpm2[ix] * w11v * w12v;

            rq[ix] = -Php * Php * wppv + (T1 / mu2) * Ph * w12v +
                     0.5 * (T2 / mu2) * Ph * Ph * wv - 0.5 * pp * wpm2[ix] * w12v * w12v;

            const double w1v = w11v + w12v;
            rm[ix] = (G / mu) * ev * Zp[ix] + (T1 / mu2) * (xv / mu + Ph) * ev * B.Z[ix] -
                     0.5 * pp * wpm2[ix] *
                         (2.0 * w1v * ev * B.Z[ix] + ev * ev * B.Z[ix] * B.Z[ix]);
        }
    }
    return out;
}

Order2Result build_order2(const AnsatzContext& ctx, const std::vector<double>& e) {
    const std::size_t ny = ctx.gy.n;
    BuildOptions bo;
    bo.I = 2;
    bo.e = e;
    bo.compute_top = false;
    Order2Result out;
    out.expansion = build_higher(ctx, bo);
    out.Phi0 = out.expansion.Phi[0];

    const TransverseBasis& B = ctx.line;
    // Amplitude-coupling constant from the basis integrals:
    //   cG = <Z', w'> + sigma^{-1} <xi Z, w'> + p(p-1) <w^{p-2} U1 Z, w'>.
    {
        auto Zp = B.apply_D1(B.Z);
        std::vector<double> t2(B.grid.n), t3(B.grid.n);
        for (std::size_t ix = 0; ix < B.grid.n; ++ix) {
            t2[ix] = B.xi[ix] * B.Z[ix];
            t3[ix] = std::pow(B.w[ix], ctx.p - 2.0) * B.U1[ix] * B.Z[ix];
        }
        out.cG = B.inner(Zp, B.wp) + B.inner(t2, B.wp) / ctx.sigma +
                 ctx.p * (ctx.p - 1.0) * B.inner(t3, B.wp);
    }

    if (ctx.chart.ambient.kappa != 0.0) return out;  // displays are flat-chart only

    auto terms = order2_terms(ctx, out.expansion.w_base[0], out.Phi0, e);

    auto project_field = [&](const Field2D& F) {
        std::vector<double> d(ny, 0.0);
        for (std::size_t iy = 0; iy < ny; ++iy) d[iy] = B.inner(F.row_vec(iy), B.wp);
        return d;
    };

    const double c0 = B.c0;
    out.identity_base =
        (sup_abs(project_field(terms.base)) + sup_abs(project_field(terms.quadratic))) / c0;

    {
        auto a = project_field(terms.linear);
        auto jphi = kops::apply_jacobi(ctx.jac, out.Phi0);
        double gap = 0.0, scale = 0.0;
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double b = c0 / ctx.mu[iy] * jphi[iy];
            gap = std::max(gap, std::abs(a[iy] - b));
            scale = std::max(scale, std::abs(b));
        }
        out.identity_linear = gap / std::max(scale, 1e-6 * c0);
    }
    {
        auto a = project_field(terms.mode);
        const std::vector<double> ee = e.empty() ? zeros(ny) : e;
        double gap = 0.0, scale = 0.0;
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double b = out.cG * ctx.Gamma[iy] / ctx.mu[iy] * ee[iy];
            gap = std::max(gap, std::abs(a[iy] - b));
            scale = std::max(scale, std::abs(b));
        }
        out.identity_mode = gap / std::max(scale, 1e-6 * c0);
    }
    {
        auto X2 = out.expansion;
        X2.w[1] = Field2D(ctx.gy, ctx.gxi);  // engine load with the order-2 correction removed
        Series R = engine_flow(ctx, X2, 2, true);
        Field2D total = terms.base;
        total += terms.linear;
        total += terms.quadratic;
        total += terms.mode;
        const Field2D eng = R.nz[2] ? R.c[2] : Field2D(ctx.gy, ctx.gxi);
        double gap = 0.0;
        for (std::size_t q = 0; q < total.v.size(); ++q)
            gap = std::max(gap, std::abs(eng.v[q] - total.v[q]));
        out.engine_display_gap = gap / std::max(total.max_abs(), 1e-12);
    }
    return out;
}

// ===========================================================================
// Exact interior residual
// ===========================================================================

Field2D assemble_inner_field(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps) {
    const TransverseBasis& B = ctx.line;
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const std::size_t ny = gy.n, nx = gx.n;
    Field2D v = from_line(gy, gx, B.w);
    double epl = 1.0;
    for (std::size_t l = 0; l < X.w.size(); ++l) {
        epl *= eps;
        if (!X.w[l].v.empty()) v.axpy(epl, X.w[l]);
    }
    if (!X.e.empty() && any_nonzero(X.e)) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            double* r = v.row(iy);
            const double c = eps * X.e[iy];
            for (std::size_t ix = 0; ix < nx; ++ix) r[ix] += c * B.Z[ix];
        }
    }
    return v;
}

std::vector<double> total_section(const AnsatzExpansion& X, double eps, std::size_t ny) {
    std::vector<double> Pt(ny, 0.0);
    double epj = 1.0;
    for (std::size_t j = 0; j < X.Phi.size(); ++j) {
        if (!X.Phi[j].empty()) {
            if (X.Phi[j].size() != ny)
                throw GridMismatch("total_section: section length differs from the spine grid");
            for (std::size_t iy = 0; iy < ny; ++iy) Pt[iy] += epj * X.Phi[j][iy];
        }
        epj *= eps;
    }
    return Pt;
}

Field2D scaled_apply(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps,
                     const Field2D& f, Field2D* mask) {
    if (!(eps > 0.0)) throw BoundViolation("operator evaluation requires eps > 0");
    const TransverseBasis& B = ctx.line;
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const std::size_t ny = gy.n, nx = gx.n;
    const double L = gy.h * static_cast<double>(ny);
    const double p = ctx.p;
    if (!f.gy.same(gy) || !f.gx.same(gx))
        throw GridMismatch("scaled_apply: field grids differ from the context");

    auto Pt = total_section(X, eps, ny);
    auto dPt = d1p(Pt, L);
    auto ddPt = d2p(Pt, L);

    Field2D vx = apply_rows(B.D1, f);
    Field2D vxx = apply_rows(B.D2, f);
    Field2D vy = apply_cols_spectral(f, 1);
    Field2D vyy = apply_cols_spectral(f, 2);
    Field2D vxy = apply_rows(B.D1, vy);

    Field2D raw(gy, gx);
    if (mask) *mask = Field2D(gy, gx);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double mu = ctx.mu[iy], dmu = ctx.dmu[iy], ddmu = ctx.ddmu[iy];
        const double mu2 = mu * mu;
        const double dlomu = dmu / mu;
        const double dlomu_p = (ddmu * mu - dmu * dmu) / mu2;
        const double dlh = ctx.dloh[iy], ddlh = ctx.ddloh[iy];
        const double V0 = ctx.V0[iy];
        double* rr = raw.row(iy);
        const double* pv = f.row(iy);
        const double* px = vx.row(iy);
        const double* pxx = vxx.row(iy);
        const double* py = vy.row(iy);
        const double* pyy = vyy.row(iy);
        const double* pxy = vxy.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double xv = B.xi[ix];
            const double xbar = eps * (xv / mu + Pt[iy]);
            const double A = ctx.warp(xbar);
            // Nodes past the validity region of the chart (the warp factor
            // vanishes at the focal distance, e.g. at the centre of a
            // circular spine) are excluded: they carry no solution mass and
            // the coordinate expression of the operator degenerates there.
            if (!(A >= 0.05)) {
                rr[ix] = 0.0;
                continue;
            }
            if (mask) mask->at(iy, ix) = 1.0;
            const double ar = ctx.warp_ratio(xbar);
            const double Vex = ctx.exact_V(iy, xbar);
            const double Dv = dlomu * xv - mu * dPt[iy];
            const double Dyv = dlomu_p * xv - dmu * dPt[iy] - mu * ddPt[iy];
            const double bracket = ddlh * pv[ix] + 2.0 * dlh * (py[ix] + px[ix] * Dv) +
                                   pyy[ix] + 2.0 * pxy[ix] * Dv + pxx[ix] * Dv * Dv +
                                   px[ix] * (Dyv + dlomu * Dv);
            rr[ix] = -pxx[ix] + pv[ix] - spow(pv[ix], p) + (Vex - V0) / mu2 * pv[ix] -
                     eps * ar * px[ix] / mu -
                     eps * eps / (A * A * mu2) * bracket;
        }
    }
    return raw;
}

InteriorResidual residual_interior(const AnsatzContext& ctx, const AnsatzExpansion& X,
                                   double eps, const ResidualOptions& opts) {
    const TransverseBasis& B = ctx.line;
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const std::size_t ny = gy.n, nx = gx.n;
    const double L = gy.h * static_cast<double>(ny);

    Field2D v = assemble_inner_field(ctx, X, eps);
    const bool has_e = !X.e.empty() && any_nonzero(X.e);
    std::vector<double> dde;
    if (has_e) dde = d2p(X.e, L);

    InteriorResidual out;
    out.eps = eps;
    Field2D maskf;
    Field2D raw = scaled_apply(ctx, X, eps, v, &maskf);
    Field2D sub = raw;
    std::size_t masked = 0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double mu2 = ctx.mu[iy] * ctx.mu[iy];
        double* rs = sub.row(iy);
        const double* pm = maskf.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (pm[ix] == 0.0) {
                ++masked;
                continue;
            }
            if (opts.subtract_mode_term && has_e)
                rs[ix] -= eps * (B.lambda0 * X.e[iy] - eps * eps * dde[iy] / mu2) * B.Z[ix];
        }
    }
    out.masked_fraction =
        static_cast<double>(masked) / static_cast<double>(ny * nx);

    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double* rr = raw.row(iy);
        const double* rs = sub.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double wgt = std::exp(opts.rho * std::abs(B.xi[ix]));
            out.raw_sup = std::max(out.raw_sup, std::abs(rr[ix]));
            out.raw_weighted = std::max(out.raw_weighted, wgt * std::abs(rr[ix]));
            out.sub_sup = std::max(out.sub_sup, std::abs(rs[ix]));
            out.sub_weighted = std::max(out.sub_weighted, wgt * std::abs(rs[ix]));
        }
    }
    if (opts.keep_fields) {
        out.raw_field = std::move(raw);
        out.sub_field = std::move(sub);
    }
    return out;
}

Field2D series_residual(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps, int M,
                        bool subtract_mode_term) {
    Series R = engine_flow(ctx, X, M, subtract_mode_term);
    Field2D out(ctx.gy, ctx.gxi);
    double epl = 1.0;
    for (int l = 0; l <= M; ++l) {
        if (R.nz[static_cast<std::size_t>(l)]) out.axpy(epl, R.c[static_cast<std::size_t>(l)]);
        epl *= eps;
    }
    return out;
}

DecayFit residual_decay(const AnsatzContext& ctx, const AnsatzExpansion& X,
                        const std::vector<double>& eps_list, const ResidualOptions& opts) {
    DecayFit out;
    std::vector<double> lx, ly;
    for (double eps : eps_list) {
        auto r = residual_interior(ctx, X, eps, opts);
        out.eps.push_back(eps);
        out.weighted_sup.push_back(r.sub_weighted);
        if (r.sub_weighted > 0.0) {
            lx.push_back(std::log(eps));
            ly.push_back(std::log(r.sub_weighted));
        }
    }
    if (lx.size() >= 2) out.exponent = fit_slope(lx, ly);
    return out;
}

// ===========================================================================
// Global approximation
// ===========================================================================

namespace {

/// Degree-7 Lagrange interpolation of a sampled row at xq; the 8-point window
/// is clamped to the grid.
double lagrange7(const Grid1D& g, const double* row, double xq) {
    if (g.n < 8) throw GridMismatch("lagrange7: need at least 8 nodes");
    const double t = (xq - g.x0) / g.h;
    long i0 = static_cast<long>(std::floor(t)) - 3;
    const long imax = static_cast<long>(g.n) - 8;
    if (i0 < 0) i0 = 0;
    if (i0 > imax) i0 = imax;
    double acc = 0.0;
    for (long k = 0; k < 8; ++k) {
        const double xk = g.x(static_cast<std::size_t>(i0 + k));
        double Lk = 1.0;
        for (long j = 0; j < 8; ++j) {
            if (j == k) continue;
            const double xj = g.x(static_cast<std::size_t>(i0 + j));
            Lk *= (xq - xj) / (xk - xj);
        }
        acc += row[i0 + k] * Lk;
    }
    return acc;
}

/// Value of the trigonometric interpolant with the given DFT coefficients.
double trig_eval(const std::vector<cplx>& modes, double L, double y) {
    const std::size_t n = modes.size();
    const double f = 2.0 * M_PI / L;
    double acc = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        const double ang = f * static_cast<double>(mode_index(m, n)) * y;
        acc += modes[m].real() * std::cos(ang) - modes[m].imag() * std::sin(ang);
    }
    return acc / static_cast<double>(n);
}

double trig_interp_real(const std::vector<double>& fv, double L, double y) {
    return trig_eval(fft(fv), L, y);
}

/// Exponential-rate fit with a power-law prefactor: least squares for
///   y = a + k log(x) + s x   (x > 0),
/// returning the exponential part s.  Envelopes of the corrections look like
/// x^k e^{s x} on any finite window, and a plain two-parameter line fit would
/// charge the prefactor against the rate; the logarithmic regressor absorbs
/// it.  Regressors are centered for conditioning; with fewer than three
/// points, or a degenerate system, this reduces to the plain slope.
double fit_exp_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    if (n == 2) return fit_slope(xs, ys);
    double mx = 0.0, ml = 0.0, my = 0.0;
    std::vector<double> lx(n);
    for (std::size_t i = 0; i < n; ++i) {
        lx[i] = std::log(xs[i]);
        mx += xs[i];
        ml += lx[i];
        my += ys[i];
    }
    const double dn = static_cast<double>(n);
    mx /= dn;
    ml /= dn;
    my /= dn;
    double suu = 0.0, suv = 0.0, svv = 0.0, suy = 0.0, svy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = xs[i] - mx;
        const double v = lx[i] - ml;
        const double z = ys[i] - my;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suy += u * z;
        svy += v * z;
    }
    const double det = suu * svv - suv * suv;
    if (!(std::abs(det) > 1e-12 * std::max(1.0, suu * svv))) return fit_slope(xs, ys);
    return (svv * suy - suv * svy) / det;
}

/// Distance (along the transverse coordinate) at which the chart degenerates:
/// the centre of a circular spine, a pole of a spherical great circle.
double chart_focal(const geom::FermiChart& chart) {
    if (chart.kind == geom::ChartKind::circle_in_plane) return chart.radius;
    if (chart.kind == geom::ChartKind::great_circle)
        return 0.5 * M_PI / std::sqrt(chart.ambient.kappa);
    return std::numeric_limits<double>::infinity();
}

/// Whether the transverse coordinate xbar names an actual chart point.  A
/// circular spine is only bounded inward (the tube saturates at the centre);
/// a spherical chart is bounded on both sides by the poles.
bool chart_point_exists(const geom::FermiChart& chart, double xbar) {
    if (chart.kind == geom::ChartKind::circle_in_plane) return xbar > -chart.radius;
    if (chart.kind == geom::ChartKind::great_circle)
        return std::abs(xbar) < chart_focal(chart);
    return true;
}

}  // namespace

double GlobalApproximation::inner(std::size_t iy, double xbar) const {
    if (!chart_point_exists(chart, xbar)) return 0.0;
    const double xiq = mu[iy] * (xbar / eps - Phi_total[iy]);
    if (xiq < gxi.x0 || xiq > gxi.xmax()) return 0.0;
    return hh[iy] * lagrange7(gxi, vI.row(iy), xiq);
}

double GlobalApproximation::evaluate(std::size_t iy, double xbar) const {
    const double cut = bump(std::abs(xbar) / (3.0 * delta));
    if (cut == 0.0) return 0.0;
    return cut * inner(iy, xbar);
}

double GlobalApproximation::inner(double ybar, double xbar) const {
    if (!chart_point_exists(chart, xbar)) return 0.0;
    const double L = gy.h * static_cast<double>(gy.n);
    const double muv = trig_interp_real(mu, L, ybar);
    const double hv = trig_interp_real(hh, L, ybar);
    const double Pv = trig_interp_real(Phi_total, L, ybar);
    const double xiq = muv * (xbar / eps - Pv);
    if (xiq < gxi.x0 || xiq > gxi.xmax()) return 0.0;
    // 8-point column window interpolated spectrally along the spine.
    const double t = (xiq - gxi.x0) / gxi.h;
    long i0 = static_cast<long>(std::floor(t)) - 3;
    const long imax = static_cast<long>(gxi.n) - 8;
    if (i0 < 0) i0 = 0;
    if (i0 > imax) i0 = imax;
    double rowvals[8];
    for (long k = 0; k < 8; ++k)
        rowvals[k] = trig_eval(vI_modes[static_cast<std::size_t>(i0 + k)], L, ybar);
    Grid1D win{gxi.x(static_cast<std::size_t>(i0)), gxi.h, 8};
    return hv * lagrange7(win, rowvals, xiq);
}

double GlobalApproximation::evaluate(double ybar, double xbar) const {
    const double cut = bump(std::abs(xbar) / (3.0 * delta));
    if (cut == 0.0) return 0.0;
    return cut * inner(ybar, xbar);
}

GlobalApproximation assemble_global(const AnsatzContext& ctx, const AnsatzExpansion& X,
                                    double eps, double delta) {
    if (!(eps > 0.0) || !(delta > 0.0))
        throw BoundViolation("global assembly requires eps > 0 and delta > 0");

    // Focal-radius guard: the plateau of the cutoff (|xbar| <= 3 delta) and
    // the decay-fit shell inside it must stay where the chart's warp factor
    // is bounded away from zero.  The outer skirt of the cutoff may saturate
    // past the focal distance (for a circular spine the inward tube fills in
    // at the centre); the evaluators return 0 there.
    const double focal = chart_focal(ctx.chart);
    if (3.0 * delta > 0.9 * focal) {
        std::ostringstream os;
        os << "cutoff plateau of half-width " << 3.0 * delta
           << " leaves the chart validity region (focal distance " << focal
           << "); shrink delta";
        throw ChartRadiusExceeded(os.str());
    }

    GlobalApproximation gl;
    gl.eps = eps;
    gl.delta = delta;
    gl.p = ctx.p;
    gl.chart = ctx.chart;
    gl.gy = ctx.gy;
    gl.gxi = ctx.gxi;
    gl.hh = ctx.hh;
    gl.mu = ctx.mu;
    const std::size_t ny = ctx.gy.n, nx = ctx.gxi.n;
    gl.e = X.e.empty() ? zeros(ny) : X.e;
    gl.Phi_total.assign(ny, 0.0);
    double epj = 1.0;
    for (std::size_t j = 0; j < X.Phi.size(); ++j) {
        if (!X.Phi[j].empty())
            for (std::size_t iy = 0; iy < ny; ++iy) gl.Phi_total[iy] += epj * X.Phi[j][iy];
        epj *= eps;
    }

    // Coverage guard: the cutoff plateau (where the global profile must be
    // positive and the decay shell is fitted) must be inside the sampled
    // transverse range.  Beyond the grid the stored profile has decayed to
    // rounding level and the evaluators return 0, which only affects the
    // outer skirt of the cutoff.
    {
        double need = 0.0;
        for (std::size_t iy = 0; iy < ny; ++iy)
            need = std::max(need,
                            ctx.mu[iy] * (3.0 * delta / eps + std::abs(gl.Phi_total[iy])));
        if (need > ctx.gxi.xmax() - 0.5) {
            std::ostringstream os;
            os << "transverse grid half-width " << ctx.gxi.xmax()
               << " does not cover the cutoff plateau (needs " << need
               << "); rebuild the context with a wider transverse grid";
            throw GridMismatch(os.str());
        }
    }

    // Inner profile at this eps.
    const TransverseBasis& B = ctx.line;
    gl.vI = from_line(ctx.gy, ctx.gxi, B.w);
    double epl = 1.0;
    for (std::size_t l = 0; l < X.w.size(); ++l) {
        epl *= eps;
        if (!X.w[l].v.empty()) gl.vI.axpy(epl, X.w[l]);
    }
    if (any_nonzero(gl.e)) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            double* r = gl.vI.row(iy);
            const double c = eps * gl.e[iy];
            for (std::size_t ix = 0; ix < nx; ++ix) r[ix] += c * B.Z[ix];
        }
    }

    // Spine Fourier data per transverse column.
    gl.vI_modes.resize(nx);
    {
        std::vector<double> col(ny);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            for (std::size_t iy = 0; iy < ny; ++iy) col[iy] = gl.vI.at(iy, ix);
            gl.vI_modes[ix] = fft(col);
        }
    }

    // Diagnostics.
    const std::size_t center = (nx - 1) / 2;
    gl.on_spine_min = std::numeric_limits<double>::infinity();
    for (std::size_t iy = 0; iy < ny; ++iy)
        gl.on_spine_min = std::min(gl.on_spine_min, ctx.hh[iy] * gl.vI.at(iy, center));

    gl.positive_core = true;
    for (std::size_t iy = 0; iy < ny && gl.positive_core; ++iy) {
        const double* r = gl.vI.row(iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double xbar = eps * (B.xi[ix] / ctx.mu[iy] + gl.Phi_total[iy]);
            if (std::abs(xbar) <= 3.0 * delta && r[ix] <= 0.0) {
                gl.positive_core = false;
                break;
            }
        }
    }

    {
        double mu_min = ctx.mu[0];
        for (double m : ctx.mu) mu_min = std::min(mu_min, m);
        gl.slope_bound = -0.9 * mu_min / eps;
        std::vector<double> ds, ls;
        for (int k = 0; k <= 8; ++k) {
            const double d = delta * (1.0 + static_cast<double>(k) / 8.0);
            double s = 0.0;
            for (std::size_t iy = 0; iy < ny; ++iy)
                s = std::max(s, std::max(std::abs(gl.inner(iy, d)), std::abs(gl.inner(iy, -d))));
            if (s > 0.0) {
                ds.push_back(d);
                ls.push_back(std::log(s));
            }
        }
        // Plain line fit: the envelope bound is stated as log|W| linear in the
        // distance, so the slope is the two-parameter least-squares coefficient.
        gl.shell_slope = ds.size() >= 2 ? fit_slope(ds, ls) : 0.0;
    }
    return gl;
}

// ===========================================================================
// Norm surrogates and fits
// ===========================================================================

double holder_sup(const Field2D& f, double alpha) {
    const std::size_t ny = f.ny(), nx = f.nx();
    double semi = 0.0;
    const double hy = f.gy.h, hx = f.gx.h;
    const double qy = std::pow(hy, alpha), qx = std::pow(hx, alpha);
    // adjacent pairs (periodic along the spine)
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const std::size_t jy = (iy + 1) % ny;
        const double* a = f.row(iy);
        const double* b = f.row(jy);
        for (std::size_t ix = 0; ix < nx; ++ix)
            semi = std::max(semi, std::abs(a[ix] - b[ix]) / qy);
    }
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double* a = f.row(iy);
        for (std::size_t ix = 0; ix + 1 < nx; ++ix)
            semi = std::max(semi, std::abs(a[ix] - a[ix + 1]) / qx);
    }
    // pairs at approximately unit distance
    const auto sy = static_cast<std::size_t>(std::lround(1.0 / hy));
    const auto sx = static_cast<std::size_t>(std::lround(1.0 / hx));
    if (sy >= 1 && sy < ny) {
        const double q = std::pow(static_cast<double>(sy) * hy, alpha);
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const std::size_t jy = (iy + sy) % ny;
            const double* a = f.row(iy);
            const double* b = f.row(jy);
            for (std::size_t ix = 0; ix < nx; ++ix)
                semi = std::max(semi, std::abs(a[ix] - b[ix]) / q);
        }
    }
    if (sx >= 1 && sx < nx) {
        const double q = std::pow(static_cast<double>(sx) * hx, alpha);
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double* a = f.row(iy);
            for (std::size_t ix = 0; ix + sx < nx; ++ix)
                semi = std::max(semi, std::abs(a[ix] - a[ix + sx]) / q);
        }
    }
    return f.max_abs() + semi;
}

double holder_sup(const std::vector<double>& f, double h, double alpha, bool periodic) {
    const std::size_t n = f.size();
    double semi = 0.0;
    const double q1 = std::pow(h, alpha);
    const std::size_t last = periodic ? n : n - 1;
    for (std::size_t i = 0; i < last; ++i)
        semi = std::max(semi, std::abs(f[i] - f[(i + 1) % n]) / q1);
    const auto s = static_cast<std::size_t>(std::lround(1.0 / h));
    if (s >= 1 && s < n) {
        const double q = std::pow(static_cast<double>(s) * h, alpha);
        const std::size_t lim = periodic ? n : n - s;
        for (std::size_t i = 0; i < lim; ++i)
            semi = std::max(semi, std::abs(f[i] - f[(i + s) % n]) / q);
    }
    return sup_abs(f) + semi;
}

double decay_rate(const Field2D& f, double lo, double hi) {
    std::vector<double> xs, ys;
    for (std::size_t ix = 0; ix < f.nx(); ++ix) {
        const double a = std::abs(f.gx.x(ix));
        if (a < lo || a > hi) continue;
        double s = 0.0;
        for (std::size_t iy = 0; iy < f.ny(); ++iy) s = std::max(s, std::abs(f.at(iy, ix)));
        if (s > 0.0) {
            xs.push_back(a);
            ys.push_back(std::log(s));
        }
    }
    if (xs.size() < 2) return 0.0;
    return fit_exp_rate(xs, ys);
}

}  // namespace conc::ansatz
