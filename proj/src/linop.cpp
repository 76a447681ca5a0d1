#include "conc/linop.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "conc/errors.hpp"

namespace conc::linop {

double sphere_area(int N) {
    const double pi = 3.14159265358979323846;
    switch (N) {
        case 1: return 2.0;
        case 2: return 2.0 * pi;
        case 3: return 4.0 * pi;
        default: return 2.0 * std::pow(pi, 0.5 * N) / std::tgamma(0.5 * N);
    }
}

namespace {

/// Fourth-order derivative of half-line samples; parity = +1 (even) or -1
/// (odd, f(0) = 0) fixes ghost values across r = 0.
std::vector<double> fd_deriv(const std::vector<double>& f, double h, int parity) {
    const std::size_t n = f.size();
    std::vector<double> d(n, 0.0);
    auto ghost = [&](long i) -> double {
        if (i >= 0) return f[static_cast<std::size_t>(i)];
        return parity * f[static_cast<std::size_t>(-i)];
    };
    for (std::size_t i = 0; i + 2 < n; ++i) {
        if (i == 0 && parity > 0) {
            d[0] = 0.0;
            continue;
        }
        long li = static_cast<long>(i);
        d[i] = (ghost(li - 2) - 8.0 * ghost(li - 1) + 8.0 * ghost(li + 1) - ghost(li + 2)) /
               (12.0 * h);
    }
    for (std::size_t i = n - 2; i < n; ++i)
        d[i] = (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) / (2.0 * h);
    return d;
}

double quad_sum(const std::vector<double>& q, const std::vector<double>& a,
                const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * a[i] * b[i];
    return s;
}

} // namespace

SectorOperator::SectorOperator(const profile::GroundState& gs, int ell)
    : ell_(ell), prob_(gs.prob), grid_(gs.grid), i0_(ell == 0 ? 0 : 1) {
    assemble(gs);
}

void SectorOperator::assemble(const profile::GroundState& gs) {
    const std::size_t n = grid_.n;
    const double h = grid_.h;
    const int N = prob_.N;
    const double p = prob_.p;
    active_ = (n - 1) - i0_;
    a_ = BandedMatrix(active_, 2, 2);

    w_end_ = gs.w[n - 1];
    const int parity = (ell_ % 2 == 0) ? 1 : -1;
    auto q_of = [&](std::size_t i) {
        double r = grid_.x(i);
        double cf = (ell_ == 0) ? 0.0 : ell_ * (ell_ + N - 2) / (r * r);
        return cf + 1.0 - p * std::pow(gs.w[i], p - 1.0);
    };

    for (std::size_t i = i0_; i < n - 1; ++i) {
        std::size_t row = i - i0_;
        if (i == 0) {
            // regular center: -u'' - (N-1)/r u' -> -N u''(0), even one-sided stencil
            double c = -static_cast<double>(N) / (12.0 * h * h);
            a_.at(row, row) = c * (-30.0) + q_of(i);
            a_.at(row, row + 1) = c * 32.0;
            a_.at(row, row + 2) = c * (-2.0);
            continue;
        }
        double r = grid_.x(i);
        double b = -(N - 1.0) / r; // coefficient of u'
        if (i == 1) {
            // fourth-order stencils with a parity ghost across r = 0:
            // -u'' = -(u_{-1} - 16 u_0 + 30 u_1 ...)? sign fixed below
            double c2 = 1.0 / (12.0 * h * h), c1 = b / (12.0 * h);
            // -u'' row: (u_{-1} - 16 u_0 + 30 u_1 - 16 u_2 + u_3) * c2, u_{-1} = parity u_1
            // b u' row: (u_{-1} - 8 u_0 + 8 u_2 - u_3) * c1, same ghost
            a_.at(row, row) = 30.0 * c2 + q_of(i) + parity * (c2 + c1);
            if (i0_ == 0) a_.at(row, row - 1) = -16.0 * c2 - 8.0 * c1;
            a_.at(row, row + 1) = -16.0 * c2 + 8.0 * c1;
            a_.at(row, row + 2) = c2 - c1;
            continue;
        }
        if (i + 2 <= n - 1) {
            double c2 = 1.0 / (12.0 * h * h), c1 = b / (12.0 * h);
            struct Term {
                long off;
                double v;
            } terms[5] = {{-2, c2 + c1},
                          {-1, -16.0 * c2 - 8.0 * c1},
                          {0, 30.0 * c2 + q_of(i)},
                          {1, -16.0 * c2 + 8.0 * c1},
                          {2, c2 - c1}};
            for (auto& t : terms) {
                long col = static_cast<long>(i) + t.off;
                // pinned nodes carry zero values: the center node in ell >= 1
                // sectors and the Dirichlet node at r_max
                if (col < static_cast<long>(i0_) || col == static_cast<long>(n) - 1) continue;
                a_.at(row, static_cast<std::size_t>(col) - i0_) += t.v;
            }
            continue;
        }
        // last active node: second-order closure against the Dirichlet end
        double c2 = 1.0 / (h * h), c1 = b / (2.0 * h);
        a_.at(row, row) = 2.0 * c2 + q_of(i);
        a_.at(row, row - 1) = -c2 - c1;
    }

    lu_ = BandedLU(a_);

    auto simp = simpson_weights(n, h);
    quad_.assign(n, 0.0);
    double ang = (ell_ == 0) ? sphere_area(N) : sphere_area(N) / N;
    for (std::size_t i = 0; i < n; ++i)
        quad_[i] = simp[i] * std::pow(grid_.x(i), N - 1) * ang;
}

std::vector<double> SectorOperator::apply(const std::vector<double>& u_full) const {
    if (u_full.size() != grid_.n) throw GridMismatch("SectorOperator::apply: size mismatch");
    const std::size_t n = grid_.n;
    const double h = grid_.h;
    std::vector<double> red(u_full.begin() + i0_, u_full.begin() + i0_ + active_);
    auto out = a_.apply(red);
    std::vector<double> full(n, 0.0);
    std::copy(out.begin(), out.end(), full.begin() + i0_);
    // the stencil matrix imposes u(r_max) = 0; restore the dropped column so
    // the result is the operator acting on the samples as given
    double uend = u_full[n - 1];
    if (uend != 0.0) {
        double b3 = -(prob_.N - 1.0) / grid_.x(n - 3);
        full[n - 3] += (1.0 / (12.0 * h * h) - b3 / (12.0 * h)) * uend;
        double b2 = -(prob_.N - 1.0) / grid_.x(n - 2);
        full[n - 2] += (-1.0 / (h * h) + b2 / (2.0 * h)) * uend;
    }
    // one-sided second-order row at the end node itself
    {
        std::size_t i = n - 1;
        double r = grid_.x(i);
        double b = -(prob_.N - 1.0) / r;
        double cf = (ell_ == 0) ? 0.0 : ell_ * (ell_ + prob_.N - 2.0) / (r * r);
        double q = cf + 1.0 - prob_.p * std::pow(w_end_, prob_.p - 1.0);
        double upp = (u_full[i - 2] - 2.0 * u_full[i - 1] + u_full[i]) / (h * h);
        double up = (3.0 * u_full[i] - 4.0 * u_full[i - 1] + u_full[i - 2]) / (2.0 * h);
        full[i] = -upp + b * up + q * u_full[i];
    }
    return full;
}

std::vector<double> SectorOperator::solve(const std::vector<double>& f_full) const {
    if (f_full.size() != grid_.n) throw GridMismatch("SectorOperator::solve: size mismatch");
    std::vector<double> red(f_full.begin() + i0_, f_full.begin() + i0_ + active_);
    lu_.solve(red);
    std::vector<double> full(grid_.n, 0.0);
    std::copy(red.begin(), red.end(), full.begin() + i0_);
    return full;
}

BandedMatrix SectorOperator::shifted_matrix(double shift) const {
    BandedMatrix m = a_;
    for (std::size_t i = 0; i < active_; ++i) m.at(i, i) -= shift;
    return m;
}

double SectorOperator::inner(const std::vector<double>& a, const std::vector<double>& b) const {
    return quad_sum(quad_, a, b);
}

double SectorOperator::norm(const std::vector<double>& a) const {
    return std::sqrt(std::max(0.0, inner(a, a)));
}

SectorOperator::Tridiag SectorOperator::finite_volume(const profile::GroundState& gs, int ell,
                                                      double h) {
    const int N = gs.prob.N;
    const double p = gs.prob.p;
    const double rmax = gs.grid.xmax();
    const std::size_t n = static_cast<std::size_t>(std::lround(rmax / h)) + 1;
    Tridiag t;
    t.grid = Grid1D{0.0, h, n};
    t.i0 = (ell == 0) ? 0 : 1;
    const std::size_t m = (n - 1) - t.i0;
    t.d.assign(m, 0.0);
    t.e.assign(m - 1, 0.0);
    t.cellw.assign(m, 0.0);

    auto cellw = [&](std::size_t i) {
        double r = t.grid.x(i);
        if (i == 0) return std::pow(0.5 * h, N) / N;
        return (std::pow(r + 0.5 * h, N) - std::pow(r - 0.5 * h, N)) / N;
    };
    auto face = [&](double rf) { return std::pow(rf, N - 1.0) / h; };

    for (std::size_t i = t.i0; i < n - 1; ++i) {
        std::size_t row = i - t.i0;
        double r = t.grid.x(i);
        double W = cellw(i);
        t.cellw[row] = W;
        double cl = (i == 0) ? 0.0 : face(r - 0.5 * h);
        double cr = face(r + 0.5 * h);
        double cf = (ell == 0) ? 0.0 : ell * (ell + N - 2.0) / (r * r);
        double q = cf + 1.0 - p * std::pow(gs.value(r), p - 1.0);
        t.d[row] = (cl + cr) / W + q;
        if (row + 1 < m) t.e[row] = -cr / std::sqrt(W * cellw(i + 1));
    }
    return t;
}

namespace {

double fv_eigenvalue(const profile::GroundState& gs, int ell, double h, std::size_t k) {
    auto t = SectorOperator::finite_volume(gs, ell, h);
    return tridiag_eigenvalue(t.d, t.e, k);
}

double eigenvalue_refined(const profile::GroundState& gs, int ell, std::size_t k) {
    double h = gs.grid.h;
    double lam_h = fv_eigenvalue(gs, ell, h, k);
    double lam_h2 = fv_eigenvalue(gs, ell, 0.5 * h, k);
    return (4.0 * lam_h2 - lam_h) / 3.0;
}

} // namespace

LinearizedOperator assemble(const profile::GroundState& gs) {
    LinearizedOperator op;
    op.gs = gs;
    op.s0 = SectorOperator(gs, 0);
    op.s1 = SectorOperator(gs, 1);

    op.lambda0 = eigenvalue_refined(gs, 0, 0);
    op.lambda1 = eigenvalue_refined(gs, 1, 0);
    if (op.lambda0 >= 0.0)
        throw SpectrumOrderViolation("assemble: lowest radial eigenvalue is not negative");
    if (std::abs(op.lambda1) > 1e-6)
        throw SpectrumOrderViolation("assemble: translation kernel eigenvalue off zero");

    // ground eigenfunction by shifted inverse iteration on the fourth-order stencil
    {
        const std::size_t n = gs.grid.n;
        const std::size_t i0 = op.s0.first_active();
        BandedLU slu(op.s0.shifted_matrix(op.lambda0 + 1e-9));
        std::vector<double> v(n - 1 - i0);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = gs.w[i + i0] * gs.w[i + i0];
        for (int it = 0; it < 8; ++it) {
            slu.solve(v);
            double m = 0.0;
            for (double x : v) m = std::max(m, std::abs(x));
            for (double& x : v) x /= m;
        }
        std::vector<double> z(n, 0.0);
        std::copy(v.begin(), v.end(), z.begin() + i0);
        if (z[0] < 0.0)
            for (double& x : z) x = -x;
        double nz = op.s0.norm(z);
        for (double& x : z) x /= nz;
        op.Z = std::move(z);
        if (op.Z[0] <= 0.0)
            throw SpectrumOrderViolation("assemble: ground eigenfunction not positive");
    }

    op.kernel = gs.wp;
    {
        auto simp = simpson_weights(gs.grid.n, gs.grid.h);
        double s = 0.0;
        for (std::size_t i = 0; i < gs.grid.n; ++i)
            s += simp[i] * gs.wp[i] * gs.wp[i] * std::pow(gs.grid.x(i), gs.prob.N - 1);
        op.c0 = sphere_area(gs.prob.N) / gs.prob.N * s;
    }

    // coercivity from Sturm counts: second eigenvalue of the deflatable
    // sectors, bottom of ell = 2 when present
    double g0 = std::min(fv_eigenvalue(gs, 0, gs.grid.h, 1), fv_eigenvalue(gs, 1, gs.grid.h, 1));
    if (gs.prob.N >= 2) g0 = std::min(g0, fv_eigenvalue(gs, 2, gs.grid.h, 0));
    op.gamma0 = g0;
    if (op.gamma0 <= 0.0)
        throw NonPositiveCoercivity("assemble: coercivity constant is not positive");

    return op;
}

double LinearizedOperator::eval_Z(double r) const {
    r = std::abs(r);
    if (r >= gs.grid.xmax()) return 0.0;
    return lagrange4(gs.grid, Z, r);
}

std::vector<double> apply_L0(const LinearizedOperator& op, const std::vector<double>& u,
                             int ell) {
    const SectorOperator& s = (ell == 0) ? op.s0 : op.s1;
    if (ell != 0 && ell != 1) throw GridMismatch("apply_L0: only sectors 0 and 1 are assembled");
    return s.apply(u);
}

std::vector<double> solve_orthogonal(const LinearizedOperator& op, const std::vector<double>& f,
                                     int ell, double tol_orth) {
    if (ell == 0) return op.s0.solve(f);
    if (ell != 1) throw GridMismatch("solve_orthogonal: only sectors 0 and 1 are assembled");
    const SectorOperator& s = op.s1;
    double k2 = s.inner(op.kernel, op.kernel);
    double fnorm = s.norm(f);
    double coef = s.inner(f, op.kernel) / std::sqrt(k2);
    if (std::abs(coef) > tol_orth * std::max(fnorm, 1e-300))
        throw FredholmViolation("solve_orthogonal: right-hand side has a kernel component");
    std::vector<double> g = f;
    double a = s.inner(f, op.kernel) / k2;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= a * op.kernel[i];
    auto u = s.solve(g);
    double b = s.inner(u, op.kernel) / k2;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= b * op.kernel[i];
    return u;
}

std::vector<double> u0_explicit(const profile::GroundState& gs) {
    std::vector<double> u(gs.grid.n, 0.0);
    for (std::size_t i = 0; i < gs.grid.n; ++i)
        u[i] = -gs.w[i] / (gs.prob.p - 1.0) - 0.5 * gs.grid.x(i) * gs.wp[i];
    return u;
}

SpecialSolutions special_solutions(const LinearizedOperator& op) {
    const auto& gs = op.gs;
    SpecialSolutions sp;
    sp.U0 = op.s0.solve(gs.w);
    {
        auto ex = u0_explicit(gs);
        double m = 0.0;
        for (std::size_t i = 0; i < ex.size(); ++i) m = std::max(m, std::abs(ex[i] - sp.U0[i]));
        sp.u0_explicit_sup_err = m;
    }
    double sigma = profile::sigma_exponent(gs.prob);
    std::vector<double> f(gs.grid.n, 0.0);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = gs.wp[i] + gs.grid.x(i) * gs.w[i] / sigma;
    sp.U1 = solve_orthogonal(op, f, 1);

    // cG = int { d_s Z + sigma^{-1} Z xi^s + p(p-1) w^{p-2} Z U_s } d_s w0 over R^N
    auto zp = fd_deriv(op.Z, gs.grid.h, 1);
    const double p = gs.prob.p;
    std::vector<double> integ(gs.grid.n, 0.0);
    for (std::size_t i = 0; i < integ.size(); ++i) {
        double r = gs.grid.x(i);
        double wv = gs.w[i];
        integ[i] = zp[i] + op.Z[i] * r / sigma + p * (p - 1.0) * std::pow(wv, p - 2.0) * op.Z[i] * sp.U1[i];
    }
    sp.cG = op.s1.inner(integ, gs.wp);
    return sp;
}

double coercivity_estimate(const LinearizedOperator& op) { return op.gamma0; }

IdentityReport sigma_identity_report(const LinearizedOperator& op) {
    auto si = profile::sigma_identity(op.gs);
    double omega = sphere_area(op.gs.prob.N);
    return {"sigma", omega * si.lhs, omega * si.rhs, si.rel_error};
}

IdentityReport a_term_identity_check(const LinearizedOperator& op, const SpecialSolutions& sp) {
    const auto& gs = op.gs;
    double sigma = profile::sigma_exponent(gs.prob);
    const double p = gs.prob.p;
    auto u0p = fd_deriv(sp.U0, gs.grid.h, 1);
    std::vector<double> integ(gs.grid.n, 0.0);
    for (std::size_t i = 0; i < integ.size(); ++i) {
        double r = gs.grid.x(i);
        double wv = gs.w[i];
        integ[i] = u0p[i] + sp.U1[i] + sp.U0[i] * r / sigma +
                   p * (p - 1.0) * std::pow(wv, p - 2.0) * sp.U1[i] * sp.U0[i];
    }
    double lhs = op.s1.inner(integ, gs.wp);
    double rhs = -op.c0;
    return {"a_term", lhs, rhs, std::abs(lhs - rhs) / std::abs(rhs)};
}

std::vector<IdentityReport> moment_identity_checks(const LinearizedOperator& op) {
    const auto& gs = op.gs;
    const std::size_t n = gs.grid.n;
    const int N = gs.prob.N;
    auto simp = simpson_weights(n, gs.grid.h);
    // int d2_{kj} w xi^k d_s w (j = s) reduces to (omega/N) int w'' w' r^N dr
    double lhs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        lhs += simp[i] * gs.second(gs.grid.x(i)) * gs.wp[i] * std::pow(gs.grid.x(i), N);
    lhs *= sphere_area(N) / N;
    double rhs = -0.5 * N * op.c0;
    IdentityReport hess{"hessian_moment", lhs, rhs, std::abs(lhs - rhs) / std::abs(rhs)};

    // gradient moment: int d_j w d_s w (j = s) via the xi-moment route
    // (omega/N) * int (-w' w - ... ) ; use int xi^s w d_j w = -delta_{js} sigma c0 instead
    double lhs2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        lhs2 += simp[i] * gs.grid.x(i) * gs.w[i] * gs.wp[i] * std::pow(gs.grid.x(i), N - 1);
    lhs2 *= sphere_area(N) / N;
    double rhs2 = -profile::sigma_exponent(gs.prob) * op.c0;
    IdentityReport grad{"center_moment", lhs2, rhs2, std::abs(lhs2 - rhs2) / std::abs(rhs2)};
    return {hess, grad};
}

void write_radial_csv(const Grid1D& grid, const std::vector<double>& values, std::ostream& os) {
    os << "r,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < grid.n; ++i) os << grid.x(i) << ',' << values[i] << '\n';
}

// ---------------------------------------------------------------------------
// LineContext

LineContext::LineContext(const profile::GroundState& gs, const LinearizedOperator& op,
                         const SpecialSolutions& sp, const Grid1D& line_grid)
    : grid_(line_grid) {
    if (gs.prob.N != 1)
        throw UnsupportedManifold("LineContext: only one transverse dimension is supported");
    if (std::abs(grid_.x0 + grid_.xmax()) > 1e-12 || grid_.n % 2 == 0)
        throw GridMismatch("LineContext: grid must be symmetric about zero with odd node count");
    const std::size_t n = grid_.n;
    p_ = gs.prob.p;
    sigma_ = profile::sigma_exponent(gs.prob);
    lambda0_ = op.lambda0;

    w_.resize(n);
    wp_.resize(n);
    Z_.resize(n);
    U0_.resize(n);
    U1_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = grid_.x(i);
        double r = std::abs(x);
        double sgn = (x < 0.0) ? -1.0 : 1.0;
        w_[i] = gs.value(r);
        wp_[i] = gs.deriv(x);
        Z_[i] = op.eval_Z(r);
        U0_[i] = (r >= gs.grid.xmax()) ? 0.0 : lagrange4(gs.grid, sp.U0, r);
        U1_[i] = sgn * ((r >= gs.grid.xmax()) ? 0.0 : lagrange4(gs.grid, sp.U1, r));
    }
    kernel_ = wp_;
    quad_ = simpson_weights(n, grid_.h);

    double z2 = quad_sum(quad_, Z_, Z_);
    double zs = 1.0 / std::sqrt(z2);
    for (double& z : Z_) z *= zs;
    c0_ = quad_sum(quad_, kernel_, kernel_);
    cG_ = sp.cG;

    // fourth-order line stencil of L0 with Dirichlet truncation at both ends
    const double h = grid_.h;
    L0_ = BandedMatrix(n, 2, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double q = 1.0 - p_ * std::pow(w_[i], p_ - 1.0);
        if (i == 0 || i == n - 1) {
            L0_.at(i, i) = 2.0 / (h * h) + q;
            if (i == 0)
                L0_.at(i, i + 1) = -1.0 / (h * h);
            else
                L0_.at(i, i - 1) = -1.0 / (h * h);
            continue;
        }
        double c2 = 1.0 / (12.0 * h * h);
        L0_.at(i, i) = 30.0 * c2 + q;
        L0_.at(i, i - 1) = -16.0 * c2;
        L0_.at(i, i + 1) = -16.0 * c2;
        if (i >= 2) L0_.at(i, i - 2) = c2;
        if (i + 2 < n) L0_.at(i, i + 2) = c2;
    }
    lu_ = BandedLU(L0_);
}

double LineContext::inner(const std::vector<double>& a, const std::vector<double>& b) const {
    if (a.size() != grid_.n || b.size() != grid_.n)
        throw GridMismatch("LineContext::inner: size mismatch");
    return quad_sum(quad_, a, b);
}

LineContext::Projection LineContext::project(const std::vector<double>& f) const {
    Projection pr;
    pr.along_kernel = inner(f, kernel_) / c0_;
    pr.along_Z = inner(f, Z_);
    return pr;
}

std::vector<double> LineContext::perp(const std::vector<double>& f) const {
    auto pr = project(f);
    std::vector<double> g = f;
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] -= pr.along_kernel * kernel_[i] + pr.along_Z * Z_[i];
    return g;
}

std::vector<double> LineContext::perp_kernel(const std::vector<double>& f) const {
    double a = inner(f, kernel_) / c0_;
    std::vector<double> g = f;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= a * kernel_[i];
    return g;
}

std::vector<double> LineContext::solve_kernel_orthogonal(const std::vector<double>& f,
                                                         double tol_orth) const {
    double fnorm = std::sqrt(inner(f, f));
    double coef = inner(f, kernel_) / std::sqrt(c0_);
    if (std::abs(coef) > tol_orth * std::max(fnorm, 1e-300))
        throw FredholmViolation("LineContext: right-hand side has a kernel component");
    auto g = perp_kernel(f);
    auto u = g;
    lu_.solve(u);
    return perp_kernel(u);
}

std::vector<double> LineContext::solve_perp_shifted(const std::vector<double>& f,
                                                    double kappa) const {
    const BandedLU* lu = nullptr;
    for (const auto& [k, fac] : shifted_) {
        if (k == kappa) {
            lu = &fac;
            break;
        }
    }
    if (!lu) {
        BandedMatrix m = L0_;
        for (std::size_t i = 0; i < grid_.n; ++i) m.at(i, i) += kappa;
        shifted_.emplace_back(kappa, BandedLU(std::move(m)));
        lu = &shifted_.back().second;
    }
    auto g = perp(f);
    lu->solve(g);
    return perp(g);
}

std::vector<double> LineContext::apply_L0(const std::vector<double>& u) const {
    return L0_.apply(u);
}

} // namespace conc::linop
