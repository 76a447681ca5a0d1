#include "conc/ansatz.hpp"

#include <cmath>
#include <vector>

#include "conc/errors.hpp"
#include "doctest.h"

using namespace conc;
using namespace conc::ansatz;
using geom::ChartKind;
using geom::build_chart;
using pot::PotentialKind;
using pot::make_potential;

namespace {

constexpr double pi = 3.14159265358979323846;
constexpr double r_star = 0.8742798843392404;
constexpr double mu2_star = 0.7823704013539622;  // V(r_star) for the floored Gaussian, c = 0.1
constexpr double cG_frozen = 0.81204483326266695;

/// Shared flagship configuration: circle of stationary radius in the floored
/// Gaussian well, cubic nonlinearity.
const AnsatzContext& flagship() {
    static AnsatzContext ctx =
        make_context(build_chart(ChartKind::circle_in_plane, 1, r_star),
                     make_potential(PotentialKind::gaussian_floored, 0.1), 3.0);
    return ctx;
}

std::vector<double> trig_field(const Grid1D& gy, double a0, double ac, double as) {
    const double L = gy.h * static_cast<double>(gy.n);
    std::vector<double> out(gy.n);
    for (std::size_t i = 0; i < gy.n; ++i) {
        const double th = 2.0 * pi * gy.x(i) / L;
        out[i] = a0 + ac * std::cos(th) + as * std::sin(th);
    }
    return out;
}

/// Outer product a(y) * g(xi) as a field.
Field2D tensor(const Grid1D& gy, const Grid1D& gx, const std::vector<double>& a,
               const std::vector<double>& g) {
    Field2D f(gy, gx);
    for (std::size_t iy = 0; iy < gy.n; ++iy) {
        double* r = f.row(iy);
        for (std::size_t ix = 0; ix < gx.n; ++ix) r[ix] = a[iy] * g[ix];
    }
    return f;
}

/// Hand-written state with three corrections, three sections, and an
/// amplitude, all smooth and decaying: nothing about it solves anything, so
/// properties verified on it hold at an arbitrary state.
AnsatzExpansion handmade_state(const AnsatzContext& ctx) {
    const Grid1D& gy = ctx.gy;
    const Grid1D& gx = ctx.gxi;
    const TransverseBasis& B = ctx.line;
    const std::size_t nx = gx.n;

    std::vector<double> g1(nx), g2(nx), g3(nx);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        g1[ix] = B.xi[ix] * B.w[ix];      // odd, decaying
        g2[ix] = B.Z[ix];                 // even bound state
        g3[ix] = B.w[ix] * B.w[ix];       // even, faster decay
    }
    AnsatzExpansion X;
    X.I = 3;
    X.p = ctx.p;
    X.sigma = ctx.sigma;
    X.w.push_back(tensor(gy, gx, trig_field(gy, 0.40, 0.15, 0.00), g1));
    X.w.push_back(tensor(gy, gx, trig_field(gy, -0.20, 0.00, 0.10), g2));
    X.w.push_back(tensor(gy, gx, trig_field(gy, 0.10, 0.05, -0.05), g3));
    X.Phi.push_back(trig_field(gy, 0.30, 0.20, 0.00));
    X.Phi.push_back(trig_field(gy, 0.00, 0.00, -0.10));
    X.Phi.push_back(trig_field(gy, 0.05, 0.05, 0.00));
    X.e = trig_field(gy, 0.25, 0.00, 0.15);
    return X;
}

/// Install synthetic tangential and Taylor tables on a context so every
/// ingredient of the expansion varies along the spine.  The potential is
/// switched to the stored polynomial so the exact evaluator and the engine
/// see the same function.
void synthesize_tables(AnsatzContext& ctx) {
    const std::size_t ny = ctx.gy.n;
    ctx.V0 = trig_field(ctx.gy, 0.80, 0.064, 0.0);
    ctx.tay.T[1] = trig_field(ctx.gy, 0.30, 0.05, 0.0);
    ctx.tay.T[2] = trig_field(ctx.gy, 0.50, 0.0, 0.10);
    ctx.tay.T[3] = trig_field(ctx.gy, 0.20, 0.08, 0.0);
    ctx.tay.T[4] = trig_field(ctx.gy, -0.30, 0.0, 0.05);
    for (int m = 0; m <= ctx.tay.order; ++m) {
        if (m == 0)
            ctx.tay.T[0] = ctx.V0;
        else if (m > 4)
            ctx.tay.T[static_cast<std::size_t>(m)].assign(ny, 0.0);
    }
    ctx.exact_potential = false;
    ctx.refresh_tangential();
}

/// Sup over the grid of |exact residual - truncated engine series| at eps.
double series_gap(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps, int M) {
    ResidualOptions opts;
    opts.keep_fields = true;
    auto r = residual_interior(ctx, X, eps, opts);
    REQUIRE(r.masked_fraction == 0.0);
    Field2D diff = r.sub_field;
    diff -= series_residual(ctx, X, eps, M, true);
    return diff.max_abs();
}

double fit_gap_slope(const AnsatzContext& ctx, const AnsatzExpansion& X,
                     const std::vector<double>& eps_list, int M) {
    std::vector<double> lx, ly;
    for (double e : eps_list) {
        lx.push_back(std::log(e));
        ly.push_back(std::log(series_gap(ctx, X, e, M)));
    }
    return fit_slope(lx, ly);
}

}  // namespace

// ===========================================================================
// Cutoff
// ===========================================================================

TEST_CASE("cutoff plateau, support, and partition identity") {
    CHECK(bump(-3.0) == 1.0);
    CHECK(bump(0.5) == 1.0);
    CHECK(bump(1.0) == 1.0);
    CHECK(bump(2.0) == 0.0);
    CHECK(bump(5.0) == 0.0);
    CHECK(bump(1.5) == doctest::Approx(0.5).epsilon(1e-14));
    for (double t : {1.1, 1.35, 1.62, 1.9})
        CHECK(bump(t) + bump(3.0 - t) == doctest::Approx(1.0).epsilon(1e-14));
    // monotone decreasing across the transition
    double prev = 1.0;
    for (int k = 1; k <= 20; ++k) {
        double v = bump(1.0 + 0.05 * k);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("cutoff derivatives match finite differences") {
    const double h = 1e-5;
    for (double t : {1.2, 1.5, 1.8}) {
        const double fd1 = (bump(t + h) - bump(t - h)) / (2.0 * h);
        const double fd2 = (bump(t + h) - 2.0 * bump(t) + bump(t - h)) / (h * h);
        CHECK(bump_d1(t) == doctest::Approx(fd1).epsilon(1e-6));
        CHECK(bump_d2(t) == doctest::Approx(fd2).epsilon(1e-4));
    }
    CHECK(bump_d1(0.9) == 0.0);
    CHECK(bump_d1(2.1) == 0.0);
    CHECK(bump_d2(0.9) == 0.0);
    // smooth flattening at both junctions
    CHECK(std::abs(bump_d1(1.0 + 1e-4)) < 1e-3);
    CHECK(std::abs(bump_d1(2.0 - 1e-4)) < 1e-3);
}

// ===========================================================================
// Transverse line toolkit
// ===========================================================================

TEST_CASE("transverse basis reproduces the closed-form line objects") {
    auto gs = profile::solve_ground_state({1, 3.0});
    Grid1D grid{-20.0, 0.02, 2001};
    auto B = build_transverse_basis(gs, grid);
    const std::size_t n = grid.n, c = (n - 1) / 2;

    // rounding floor of the second-difference apply at this spacing
    CHECK(B.newton_residual < 5e-12);
    CHECK(B.sigma == doctest::Approx(1.5).epsilon(1e-15));

    // w = sqrt(2) sech(xi); even by construction
    const double s2 = std::sqrt(2.0);
    double werr = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        werr = std::max(werr, std::abs(B.w[i] - s2 / std::cosh(B.xi[i])));
    CHECK(werr < 1e-6);
    CHECK(B.w[c] == doctest::Approx(s2).epsilon(1e-8));
    for (std::size_t i = 0; i < 10; ++i) CHECK(B.w[i] == B.w[n - 1 - i]);

    // exact discrete eigenpairs
    CHECK(B.kernel_residual < 1e-11);
    CHECK(B.z_residual < 1e-11);
    CHECK(std::abs(B.lambda0 + 3.0) < 1e-5);

    // Z = sqrt(3)/2 sech^2, unit quadrature norm, positive at the center
    CHECK(B.quad([&] {
              std::vector<double> z2(n);
              for (std::size_t i = 0; i < n; ++i) z2[i] = B.Z[i] * B.Z[i];
              return z2;
          }()) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(B.Z[c] == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-6));

    // kernel aligned and normalized against the smooth weight wp
    double kw = 0.0, kdiff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        kw += B.kernel[i] * B.w[i];
        kdiff = std::max(kdiff, std::abs(B.kernel[i] - B.wp[i]));
    }
    CHECK(std::abs(kw) * grid.h < 1e-14);  // odd against even
    CHECK(kdiff < 1e-6);
    CHECK(B.c0 == doctest::Approx(4.0 / 3.0).epsilon(5e-7));
    CHECK(B.inner(B.kernel, B.wp) == doctest::Approx(B.c0).epsilon(1e-12));
}

TEST_CASE("deflated and shifted solves satisfy their equations") {
    auto gs = profile::solve_ground_state({1, 3.0});
    Grid1D grid{-20.0, 0.02, 2001};
    auto B = build_transverse_basis(gs, grid);
    const std::size_t n = grid.n;

    // U0 against the scaling closed form -w/(p-1) - xi w'/2
    double u0err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        u0err = std::max(u0err,
                         std::abs(B.U0[i] - (-0.5 * B.w[i] - 0.5 * B.xi[i] * B.wp[i])));
    CHECK(u0err < 1e-6);

    // U1 equation: L0 U1 = wp + sigma^{-1} xi w on the kernel complement
    {
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = B.wp[i] + B.xi[i] * B.w[i] / B.sigma;
        const double kc = B.kernel_component(rhs, true);
        CHECK(std::abs(kc) < 1e-4);  // continuum projection vanishes identically
        auto lhs = B.apply_L0(B.U1);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(lhs[i] - rhs[i]));
        CHECK(res < 1e-10);
    }

    // generic deflated solve
    {
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = (1.0 + B.xi[i]) * B.w[i] * B.w[i];
        auto dep = rhs;
        B.kernel_component(dep, true);
        auto x = B.solve_deflated(rhs);
        auto lx = B.apply_L0(x);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(lx[i] - dep[i]));
        CHECK(res < 5e-11);  // rounding floor of the second-difference apply, ~2.5e3*eps_mach*|rhs|
        CHECK(std::abs(B.kernel_component(x, false)) < 1e-11);
    }

    // shifted solve on the complement of both eigenvectors
    {
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = B.xi[i] * B.w[i] * B.w[i];
        auto dep = rhs;
        B.kernel_component(dep, true);
        B.z_component(dep, true);
        auto x = B.solve_shifted_perp(rhs, 0.37);
        auto lx = B.apply_L0(x);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            res = std::max(res, std::abs(lx[i] + 0.37 * x[i] - dep[i]));
        CHECK(res < 5e-11);
        CHECK(std::abs(B.kernel_component(x, false)) < 1e-11);
        CHECK(std::abs(B.z_component(x, false)) < 1e-11);
    }
}

// ===========================================================================
// Normal Taylor tables
// ===========================================================================

TEST_CASE("normal Taylor tables match direct evaluation along the normal") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 0.9);
    auto tab = normal_taylor(g, chart, 8);
    REQUIRE(tab.order == 8);
    for (std::size_t iy : {std::size_t{0}, chart.ybar.n / 3, 2 * chart.ybar.n / 3}) {
        const double yb = chart.ybar.x(iy);
        for (double t : {0.1, -0.1, 0.05}) {
            double acc = 0.0, fact = 1.0, pw = 1.0;
            for (int m = 0; m <= 8; ++m) {
                if (m > 0) {
                    fact *= m;
                    pw *= t;
                }
                acc += tab.T[static_cast<std::size_t>(m)][iy] * pw / fact;
            }
            const double exact = g.value(chart.ambient_point(yb, {t}));
            CHECK(acc == doctest::Approx(exact).epsilon(1e-10));
        }
    }
}

TEST_CASE("normal Taylor closed forms: polynomial, constants, spheres") {
    // V = 1 + |z|^2 along the outward normal of a circle of radius 1.3:
    // exactly 1 + (r + t)^2.
    auto poly = make_potential(PotentialKind::polynomial);
    auto c13 = build_chart(ChartKind::circle_in_plane, 1, 1.3);
    auto tp = normal_taylor(poly, c13, 6);
    CHECK(tp.T[0][5] == doctest::Approx(1.0 + 1.69).epsilon(1e-14));
    CHECK(tp.T[1][5] == doctest::Approx(2.6).epsilon(1e-14));
    CHECK(tp.T[2][5] == doctest::Approx(2.0).epsilon(1e-14));
    for (int m = 3; m <= 6; ++m) CHECK(tp.T[static_cast<std::size_t>(m)][5] == 0.0);

    // constants restrict to constants with no normal variation
    auto cst = make_potential(PotentialKind::constant, 2.0);
    auto sph = build_chart(ChartKind::great_circle, 1, 0.64);
    auto tc = normal_taylor(cst, sph, 6);
    CHECK(tc.T[0][0] == 2.0);
    for (int m = 1; m <= 6; ++m) CHECK(tc.T[static_cast<std::size_t>(m)][0] == 0.0);

    // the Gaussian well is radial, hence constant along any great-circle
    // normal (|z| is fixed on the sphere)
    auto tg = normal_taylor(make_potential(PotentialKind::gaussian_floored, 0.1), sph, 6);
    CHECK(tg.T[0][0] ==
          doctest::Approx(0.1 + std::exp(-0.5 / 0.64)).epsilon(1e-13));
    for (int m = 1; m <= 6; ++m)
        CHECK(std::abs(tg.T[static_cast<std::size_t>(m)][0]) < 1e-13);
}

TEST_CASE("warp factor series coefficients") {
    auto cst = make_potential(PotentialKind::constant, 1.0);

    // circle radius r: A = 1 + t/r, A'/A = sum (-1)^m t^m / r^{m+1},
    // A^{-2} = sum (m+1) (-1/r)^m t^m
    const double r = 1.7;
    auto tc = normal_taylor(cst, build_chart(ChartKind::circle_in_plane, 1, r), 6);
    for (int m = 0; m <= 6; ++m) {
        const double sgn = (m % 2 == 0) ? 1.0 : -1.0;
        CHECK(tc.drift[static_cast<std::size_t>(m)] ==
              doctest::Approx(sgn / std::pow(r, m + 1)).epsilon(1e-13));
        CHECK(tc.inv_sq[static_cast<std::size_t>(m)] ==
              doctest::Approx((m + 1) * sgn / std::pow(r, m)).epsilon(1e-13));
    }

    // sphere curvature kappa: A = cos(sqrt(kappa) t), A'/A = -kappa t - kappa^2 t^3/3 - ...,
    // A^{-2} = 1 + kappa t^2 + (2/3) kappa^2 t^4 + ...
    const double kap = 0.64;
    auto ts = normal_taylor(cst, build_chart(ChartKind::great_circle, 1, kap), 6);
    CHECK(ts.drift[0] == 0.0);
    CHECK(ts.drift[1] == doctest::Approx(-kap).epsilon(1e-13));
    CHECK(ts.drift[2] == 0.0);
    CHECK(ts.drift[3] == doctest::Approx(-kap * kap / 3.0).epsilon(1e-13));
    CHECK(ts.drift[5] == doctest::Approx(-2.0 * kap * kap * kap / 15.0).epsilon(1e-13));
    CHECK(ts.inv_sq[0] == 1.0);
    CHECK(ts.inv_sq[1] == 0.0);
    CHECK(ts.inv_sq[2] == doctest::Approx(kap).epsilon(1e-13));
    CHECK(ts.inv_sq[4] == doctest::Approx(2.0 * kap * kap / 3.0).epsilon(1e-13));

    // straight line: no warp at all
    auto tl = normal_taylor(cst, build_chart(ChartKind::straight_line, 1, 2.0 * pi), 4);
    CHECK(tl.inv_sq[0] == 1.0);
    for (int m = 1; m <= 4; ++m) {
        CHECK(tl.drift[static_cast<std::size_t>(m)] == 0.0);
        CHECK(tl.inv_sq[static_cast<std::size_t>(m)] == 0.0);
    }
    CHECK(tl.drift[0] == 0.0);
}

// ===========================================================================
// Context assembly
// ===========================================================================

TEST_CASE("flagship context: stationary spine, frozen scales, nondegenerate") {
    const AnsatzContext& ctx = flagship();
    CHECK(ctx.stationary_sup <= ctx.tol_stationary);
    CHECK(ctx.sigma == doctest::Approx(1.5).epsilon(1e-15));
    for (std::size_t iy : {std::size_t{0}, std::size_t{100}}) {
        CHECK(ctx.V0[iy] == doctest::Approx(mu2_star).epsilon(1e-12));
        CHECK(ctx.mu[iy] == doctest::Approx(std::sqrt(mu2_star)).epsilon(1e-12));
        // p = 3: the slow amplitude equals mu
        CHECK(ctx.hh[iy] == doctest::Approx(ctx.mu[iy]).epsilon(1e-14));
    }
    CHECK(ctx.Gamma[0] == doctest::Approx(-1.0 / r_star).epsilon(1e-14));
    CHECK(ctx.Hvec[0] == doctest::Approx(1.0 / r_star).epsilon(1e-14));
    // stationarity written on the Taylor table: sigma T1 = -V0 H
    CHECK(ctx.tay.T[1][0] ==
          doctest::Approx(-mu2_star / (1.5 * r_star)).epsilon(1e-8));
    CHECK(ctx.jac_ok);
    CHECK(ctx.jac_min_abs_eig > 1e-3);
}

// ===========================================================================
// First order
// ===========================================================================

TEST_CASE("first-order solvability load matches the closed form off-station") {
    for (double r : {0.7, 0.95}) {
        auto ctx = make_context(build_chart(ChartKind::circle_in_plane, 1, r),
                                make_potential(PotentialKind::gaussian_floored, 0.1), 3.0);
        auto d = order1_defect(ctx);
        const double mu = ctx.mu[0];
        const double predicted =
            -(ctx.line.c0 / (mu * mu * mu)) *
            (ctx.sigma * ctx.tay.T[1][0] + ctx.V0[0] * ctx.Hvec[0]);
        REQUIRE(std::abs(predicted) > 1e-3);  // genuinely off-station
        CHECK(d[0] / predicted == doctest::Approx(1.0).epsilon(2e-4));
        // homogeneous spine: identical load at every node
        CHECK(d[ctx.gy.n / 2] == doctest::Approx(d[0]).epsilon(1e-12));
        if (r == 0.7) CHECK_THROWS_AS((void)build_order1(ctx), FredholmViolation);
    }
}

TEST_CASE("first-order correction equals the closed form on the flagship") {
    auto res = build_order1(flagship());
    CHECK(res.defect_sup <= flagship().tol_stationary);
    CHECK(res.formula_gap < 1e-6);
    CHECK(res.w11.max_abs() > 0.1);  // nontrivial correction
}

// ===========================================================================
// Second order
// ===========================================================================

TEST_CASE("second-order displays, projections, and the coupling constant") {
    const AnsatzContext& ctx = flagship();
    auto e = trig_field(ctx.gy, 0.30, 0.20, 0.0);
    auto res = build_order2(ctx, e);
    CHECK(res.identity_base < 1e-10);
    CHECK(res.identity_linear < 1e-5);
    CHECK(res.identity_mode < 1e-6);
    CHECK(res.engine_display_gap < 1e-10);
    CHECK(res.cG == doctest::Approx(cG_frozen).epsilon(1e-5));
    CHECK(res.expansion.defect_final.size() >= 2);

    // zero amplitude leaves nothing for the section to balance
    auto res0 = build_order2(ctx, std::vector<double>(ctx.gy.n, 0.0));
    double p0 = 0.0;
    for (double v : res0.Phi0) p0 = std::max(p0, std::abs(v));
    CHECK(p0 < 1e-8);
}

// ===========================================================================
// Engine versus exact evaluator at an arbitrary state
// ===========================================================================

TEST_CASE("series engine matches the exact operator to its truncation order") {
    auto ctx = make_context(build_chart(ChartKind::circle_in_plane, 1, 2.0),
                            make_potential(PotentialKind::constant, 1.0), 3.0);
    synthesize_tables(ctx);
    auto X = handmade_state(ctx);
    const std::vector<double> eps_list{0.02, 0.0141, 0.01};

    const double s4 = fit_gap_slope(ctx, X, eps_list, 4);
    CHECK(s4 >= 5.0 - 0.15);
    const double s2 = fit_gap_slope(ctx, X, eps_list, 2);
    CHECK(s2 >= 3.0 - 0.15);
    CHECK(s2 <= 3.5);  // the gap is genuinely third order, not accidentally higher
}

TEST_CASE("series engine on a curved ambient chart") {
    auto ctx = make_context(build_chart(ChartKind::great_circle, 1, 0.64),
                            make_potential(PotentialKind::constant, 1.0), 3.0);
    synthesize_tables(ctx);
    auto X = handmade_state(ctx);
    const double s3 = fit_gap_slope(ctx, X, {0.025, 0.0158, 0.01}, 3);
    CHECK(s3 >= 4.0 - 0.2);
}

// ===========================================================================
// Higher-order construction
// ===========================================================================

TEST_CASE("flagship construction drives the interior residual to high order") {
    const AnsatzContext& ctx = flagship();
    BuildOptions opts;
    opts.I = 3;
    opts.e = trig_field(ctx.gy, 0.20, 0.0, 0.10);
    auto X = build_higher(ctx, opts);
    REQUIRE(X.w.size() == 3);
    REQUIRE(X.Phi.size() == 3);

    for (double dfin : X.defect_final) CHECK(dfin < 1e-8);
    for (double sres : X.solve_residual) CHECK(sres < 1e-9);
    CHECK(X.tau <= -0.9);
    CHECK(X.top_rhs.size() == ctx.gy.n);
    CHECK(X.top_section.size() == ctx.gy.n);

    auto fit = residual_decay(ctx, X, {0.05, 0.0354, 0.025});
    CHECK(fit.exponent >= 4.0 - 0.2);

    // lower order leaves a larger residual at the same epsilon
    BuildOptions o1;
    o1.I = 1;
    o1.e = opts.e;
    o1.compute_top = false;
    auto X1 = build_higher(ctx, o1);
    auto r1 = residual_interior(ctx, X1, 0.05);
    auto r3 = residual_interior(ctx, X, 0.05);
    CHECK(r3.sub_weighted < r1.sub_weighted);

    // the chart saturates inside the wide grid at this epsilon: some tail
    // nodes are excluded, and only they are
    CHECK(r3.masked_fraction > 0.0);
    CHECK(r3.masked_fraction < 0.25);
    auto r3s = residual_interior(ctx, X, 0.025);
    CHECK(r3s.masked_fraction == 0.0);
}

TEST_CASE("construction guards: order bounds and size mismatches") {
    const AnsatzContext& ctx = flagship();
    BuildOptions bad;
    bad.I = 5;
    CHECK_THROWS_AS((void)build_higher(ctx, bad), BoundViolation);
    bad.I = 0;
    CHECK_THROWS_AS((void)build_higher(ctx, bad), BoundViolation);
    BuildOptions wrong;
    wrong.I = 1;
    wrong.e = std::vector<double>(7, 0.1);
    CHECK_THROWS_AS((void)build_higher(ctx, wrong), GridMismatch);
}

TEST_CASE("flat degenerate spine: no sections needed, machine-level residuals") {
    auto ctx = make_context(build_chart(ChartKind::straight_line, 1, 2.0 * pi),
                            make_potential(PotentialKind::constant, 1.0), 3.0);
    CHECK(!ctx.jac_ok);  // translations are flat directions
    CHECK(ctx.stationary_sup <= ctx.tol_stationary);

    auto r1 = build_order1(ctx);
    CHECK(r1.w11.max_abs() < 1e-12);

    BuildOptions opts;
    opts.I = 2;
    opts.compute_top = false;
    auto X0 = build_higher(ctx, opts);
    for (double dfin : X0.defect_final) CHECK(dfin < 1e-11);
    double psup = 0.0;
    for (const auto& Pj : X0.Phi)
        for (double v : Pj) psup = std::max(psup, std::abs(v));
    CHECK(psup == 0.0);
    // the spine solves the problem exactly: every interior load vanishes
    auto rr = residual_interior(ctx, X0, 0.05);
    CHECK(rr.sub_weighted < 1e-9);

    // a nonzero amplitude couples only through parity-even terms, so the
    // degenerate normal operator is never actually needed
    opts.e = trig_field(ctx.gy, 0.20, 0.0, 0.10);
    auto Xe = build_higher(ctx, opts);
    for (double dfin : Xe.defect_final) CHECK(dfin < 1e-10);
    auto fit = residual_decay(ctx, Xe, {0.04, 0.0283, 0.02});
    CHECK(fit.exponent >= 3.0 - 0.2);
}

// ===========================================================================
// Global approximation
// ===========================================================================

TEST_CASE("global approximation at the flagship defaults") {
    const AnsatzContext& ctx = flagship();
    BuildOptions opts;
    opts.I = 2;
    opts.e = trig_field(ctx.gy, 0.10, 0.0, 0.05);
    opts.compute_top = false;
    auto X = build_higher(ctx, opts);

    const double eps = 0.05, delta = 0.25 * r_star;
    auto W = assemble_global(ctx, X, eps, delta);

    CHECK(W.positive_core);
    CHECK(W.on_spine_min > 1.0);

    // The outer-shell diagnostic [delta, 2*delta] tracks the local decay rate,
    // which softens off the spine with the potential (sqrt(V) drops ~18%
    // across the tube); its secant sits a few percent above the nominal
    // spine-rate bound and converges there from above as eps shrinks.
    CHECK(W.shell_slope <= 0.93 * W.slope_bound);
    CHECK(W.shell_slope >= 1.02 * W.slope_bound);

    // Over the exponential regime of the layer -- past the profile cap,
    // well inside the cutoff plateau -- the envelope does beat the nominal
    // rate: fit log(shell sup) on dist in [delta/2, 3*delta/2].
    {
        std::vector<double> ds, ls;
        for (int k = 0; k <= 16; ++k) {
            const double d = delta * (0.5 + k / 16.0);
            double s = 0.0;
            for (std::size_t iy = 0; iy < ctx.gy.n; ++iy)
                s = std::max({s, std::abs(W.inner(iy, d)), std::abs(W.inner(iy, -d))});
            REQUIRE(s > 0.0);
            ds.push_back(d);
            ls.push_back(std::log(s));
        }
        CHECK(fit_slope(ds, ls) <= W.slope_bound);
    }

    // vanishes identically outside the support and beyond the chart
    CHECK(W.evaluate(std::size_t{0}, 6.0 * delta + 0.1) == 0.0);
    CHECK(W.evaluate(std::size_t{0}, -(r_star + 0.05)) == 0.0);
    CHECK(W.evaluate(0.37, 6.0 * delta + 0.1) == 0.0);

    // plateau: the cutoff is inert where eta = 1
    const double xin = 0.4 * delta;
    CHECK(W.evaluate(std::size_t{3}, xin) ==
          doctest::Approx(W.inner(std::size_t{3}, xin)).epsilon(1e-14));
    CHECK(W.evaluate(std::size_t{3}, xin) > 0.0);

    // interpolated evaluation agrees with the nodal fast path on nodes
    const double yb = ctx.gy.x(17);
    CHECK(W.evaluate(yb, xin) ==
          doctest::Approx(W.evaluate(std::size_t{17}, xin)).epsilon(1e-9));

    // on the spine the inner profile is the slow amplitude times the peak of
    // the ground profile, up to the order-eps corrections and the small
    // seat shift from the section
    CHECK(W.inner(std::size_t{0}, 0.0) ==
          doctest::Approx(ctx.hh[0] * std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("global assembly guards") {
    const AnsatzContext& ctx = flagship();
    BuildOptions opts;
    opts.I = 1;
    opts.compute_top = false;
    auto X = build_higher(ctx, opts);

    CHECK_THROWS_AS((void)assemble_global(ctx, X, -0.05, 0.2), BoundViolation);
    CHECK_THROWS_AS((void)assemble_global(ctx, X, 0.05, 0.0), BoundViolation);
    // plateau past the chart validity region
    CHECK_THROWS_AS((void)assemble_global(ctx, X, 0.05, 0.31 * r_star),
                    ChartRadiusExceeded);
    // plateau wider than the sampled transverse range at this epsilon
    CHECK_THROWS_AS((void)assemble_global(ctx, X, 0.01, 0.25 * r_star), GridMismatch);
}

// ===========================================================================
// Norm surrogates
// ===========================================================================

TEST_CASE("Holder surrogate and decay-rate fits") {
    // constant: no variation, the sup term alone
    std::vector<double> ones(64, 1.0);
    CHECK(holder_sup(ones, 0.1, 0.5, true) == 1.0);

    // sine on the period: sup 1 plus a finite quotient
    Grid1D gy{0.0, 2.0 * pi / 128.0, 128};
    auto s = trig_field(gy, 0.0, 0.0, 1.0);
    const double hs = holder_sup(s, gy.h, 0.5, true);
    CHECK(hs > 1.0);
    CHECK(hs < 3.0);

    // transverse envelope exp(-1.3 |xi|)
    Grid1D gx{-18.0, 0.02, 1801};
    Field2D f(gy, gx);
    for (std::size_t iy = 0; iy < gy.n; ++iy)
        for (std::size_t ix = 0; ix < gx.n; ++ix)
            f.row(iy)[ix] = (1.0 + 0.1 * s[iy]) * std::exp(-1.3 * std::abs(gx.x(ix)));
    CHECK(decay_rate(f, 8.0, 16.0) == doctest::Approx(-1.3).epsilon(2e-2));
}
