#include "conc/k_ops.hpp"

#include <cmath>
#include <sstream>

#include "conc/errors.hpp"
#include "doctest.h"

using conc::geom::ChartKind;
using conc::geom::build_chart;
using conc::pot::PotentialKind;
using conc::pot::make_potential;
using conc::pot::restrict_to_chart;
using namespace conc::kops;

namespace {

constexpr double pi = 3.14159265358979323846;
constexpr double r_star = 0.8742798843392404;

/// Unweighted mode-0 eigenvalue of the second-variation operator on a
/// stationary circle in a radial potential, from closed forms.
double circle_mode0(double rad, double floor_c) {
    double e = std::exp(-0.5 * rad * rad);
    double V = floor_c + e;
    double Vpp = e * (rad * rad - 1.0);
    double sigma = 1.5;
    return (1.0 + 1.0 / sigma) / (rad * rad) - sigma * Vpp / V;
}

} // namespace

TEST_CASE("weighted volume matches closed forms") {
    auto flat = make_potential(PotentialKind::constant, 1.0);
    auto c13 = build_chart(ChartKind::circle_in_plane, 1, 1.3);
    CHECK(weighted_energy(c13, restrict_to_chart(flat, c13, 3.0)) ==
          doctest::Approx(2.0 * pi * 1.3).epsilon(1e-13));

    auto bare = make_potential(PotentialKind::gaussian_floored, 0.0);
    auto c09 = build_chart(ChartKind::circle_in_plane, 1, 0.9);
    CHECK(weighted_energy(c09, restrict_to_chart(bare, c09, 3.0, 0.3)) ==
          doctest::Approx(2.0 * pi * 0.9 * std::exp(-1.5 * 0.405)).epsilon(1e-13));

    auto poly = make_potential(PotentialKind::polynomial);
    auto c1 = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    CHECK(weighted_energy(c1, restrict_to_chart(poly, c1, 3.0)) ==
          doctest::Approx(2.0 * pi * std::pow(2.0, 1.5)).epsilon(1e-13));
}

TEST_CASE("stationary residual vanishes exactly where it should") {
    auto flat = make_potential(PotentialKind::constant, 1.0);

    auto line = build_chart(ChartKind::straight_line, 2, 5.0);
    CHECK(stationary_residual(line, restrict_to_chart(flat, line, 3.0)).sup_norm == 0.0);

    auto c1 = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    CHECK(stationary_residual(c1, restrict_to_chart(flat, c1, 3.0)).sup_norm ==
          doctest::Approx(1.0).epsilon(1e-14));

    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto cs = build_chart(ChartKind::circle_in_plane, 1, r_star);
    CHECK(stationary_residual(cs, restrict_to_chart(g, cs, 3.0, 0.4)).sup_norm < 1e-12);

    auto bare = make_potential(PotentialKind::gaussian_floored, 0.0);
    auto cb = build_chart(ChartKind::circle_in_plane, 1, 1.0 / std::sqrt(1.5));
    CHECK(stationary_residual(cb, restrict_to_chart(bare, cb, 3.0, 0.3)).sup_norm < 1e-12);
}

TEST_CASE("residual matches the derivative of the weighted volume") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    double rad = 0.7, h = 1e-5, sigma = 1.5;

    auto energy_at = [&](double rr) {
        auto c = build_chart(ChartKind::circle_in_plane, 1, rr);
        return weighted_energy(c, restrict_to_chart(g, c, 3.0, 0.2));
    };
    double dE = (energy_at(rad + h) - energy_at(rad - h)) / (2.0 * h);

    auto chart = build_chart(ChartKind::circle_in_plane, 1, rad);
    auto res = stationary_residual(chart, restrict_to_chart(g, chart, 3.0, 0.2));
    double V = 0.1 + std::exp(-0.5 * rad * rad);
    double predicted = 2.0 * pi * rad * std::pow(V, sigma - 1.0) * res.field[0][0];
    CHECK(dE == doctest::Approx(predicted).epsilon(1e-6));
}

TEST_CASE("stationary radius root-find") {
    auto bare = make_potential(PotentialKind::gaussian_floored, 0.0);
    double r0 = find_stationary_radius(bare, 1.5, 0.5, 2.0);
    CHECK(r0 == doctest::Approx(1.0 / std::sqrt(1.5)).epsilon(1e-12));

    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    double r1 = find_stationary_radius(g, 1.5, 0.5, 2.0);
    CHECK(r1 == doctest::Approx(r_star).epsilon(1e-12));
    CHECK(std::abs(1.5 * g.gradient({r1, 0.0})[0] + g.value({r1, 0.0}) / r1) < 1e-12);

    auto flat = make_potential(PotentialKind::constant, 1.0);
    CHECK_THROWS_AS(find_stationary_radius(flat, 1.5, 0.5, 2.0), conc::NoSignChange);
}

TEST_CASE("jacobi assembly at the stationary circle") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));

    CHECK(J.stationary);
    CHECK(J.asymmetry < 1e-8);

    double q0 = circle_mode0(r_star, 0.1);
    double rr = r_star * r_star;
    std::size_t dim = J.n;
    // ascending spectrum: top is mode 0, then the doubled modes
    CHECK(J.eigenvalues[dim - 1] == doctest::Approx(q0).epsilon(1e-10));
    CHECK(J.eigenvalues[dim - 2] == doctest::Approx(q0 - 1.0 / rr).epsilon(1e-10));
    CHECK(J.eigenvalues[dim - 3] == doctest::Approx(q0 - 1.0 / rr).epsilon(1e-10));
    CHECK(J.eigenvalues[dim - 4] == doctest::Approx(q0 - 4.0 / rr).epsilon(1e-10));
    CHECK(J.eigenvalues[dim - 5] == doctest::Approx(q0 - 4.0 / rr).epsilon(1e-10));

    CHECK(J.eigenvalues[dim - 1] == doctest::Approx(2.4887).epsilon(5e-5));
    CHECK(J.eigenvalues[dim - 2] == doctest::Approx(1.1805).epsilon(5e-5));
    CHECK(J.eigenvalues[dim - 4] == doctest::Approx(-2.7444).epsilon(5e-5));

    // symbol of the tangential laplacian at the highest resolved mode
    double m = static_cast<double>(dim / 2);
    CHECK(J.eigenvalues[0] == doctest::Approx(q0 - m * m / rr).epsilon(1e-9));

    CHECK(nondegeneracy_check(J) == doctest::Approx(std::abs(q0 - 1.0 / rr)).epsilon(1e-9));
    CHECK(nondegeneracy_check(J) > 1e-6);
}

TEST_CASE("quadratic form agrees with the weighted pairing") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));
    double L = chart.length;

    std::vector<std::vector<double>> sections;
    std::vector<double> ones(J.n, 1.0);
    sections.push_back(ones);
    std::vector<double> s1(J.n), s2(J.n);
    for (std::size_t i = 0; i < J.n; ++i) {
        double yb = chart.ybar.x(i);
        s1[i] = std::cos(2.0 * pi * yb / L);
        s2[i] = 0.3 + std::sin(4.0 * pi * yb / L) - 0.5 * std::cos(2.0 * pi * yb / L);
    }
    sections.push_back(s1);
    sections.push_back(s2);

    for (const auto& Phi : sections) {
        auto JPhi = apply_jacobi(J, Phi);
        std::vector<double> minus(JPhi.size());
        for (std::size_t i = 0; i < JPhi.size(); ++i) minus[i] = -JPhi[i];
        double pairing = weighted_inner(J, minus, Phi);
        double form = quadratic_form(J, Phi);
        CHECK(form == doctest::Approx(pairing).epsilon(1e-6));
    }
}

TEST_CASE("constant-section form equals the second radial derivative of the volume") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));

    auto energy_at = [&](double rr) {
        auto c = build_chart(ChartKind::circle_in_plane, 1, rr);
        return weighted_energy(c, restrict_to_chart(g, c, 3.0, 0.2));
    };
    double h = 1e-3;
    double d2E = (-energy_at(r_star + 2 * h) + 16 * energy_at(r_star + h) - 30 * energy_at(r_star) +
                  16 * energy_at(r_star - h) - energy_at(r_star - 2 * h)) /
                 (12 * h * h);
    CHECK(d2E == doctest::Approx(-9.46079).epsilon(1e-5));

    std::vector<double> ones(J.n, 1.0);
    CHECK(quadratic_form(J, ones) == doctest::Approx(d2E).epsilon(1e-7));

    auto Jones = apply_jacobi(J, ones);
    CHECK(weighted_inner(J, Jones, ones) == doctest::Approx(-d2E).epsilon(1e-7));
}

TEST_CASE("translation and rotation families force degeneracy") {
    auto flat = make_potential(PotentialKind::constant, 1.0);

    auto line = build_chart(ChartKind::straight_line, 2, 5.0);
    auto Jl = assemble_jacobi(line, restrict_to_chart(flat, line, 3.0));
    CHECK(nondegeneracy_check(Jl) < 1e-10);
    std::vector<double> rhs(Jl.n * 2, 1.0);
    CHECK_THROWS_AS(invert_jacobi(Jl, rhs), conc::DegenerateOperator);

    auto gc = build_chart(ChartKind::great_circle, 2, 1.0);
    auto Jg = assemble_jacobi(gc, restrict_to_chart(flat, gc, 3.0));
    CHECK(nondegeneracy_check(Jg) < 1e-8);
    // the rotation kernel sits at mode 1; mode 0 carries the curvature value
    std::size_t dim = Jg.n * 2;
    CHECK(Jg.eigenvalues[dim - 1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(Jg.eigenvalues[dim - 2] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("inversion round trip with norm bound") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));
    double L = chart.length;

    std::vector<double> known(J.n);
    for (std::size_t i = 0; i < J.n; ++i) {
        double yb = chart.ybar.x(i);
        known[i] = 0.3 + 0.2 * std::cos(2.0 * pi * yb / L) - 0.1 * std::sin(4.0 * pi * yb / L);
    }
    auto Psi = apply_jacobi(J, known);
    auto inv = invert_jacobi(J, Psi);
    double diff = 0.0;
    for (std::size_t i = 0; i < J.n; ++i) diff = std::max(diff, std::abs(inv.Phi[i] - known[i]));
    CHECK(diff < 1e-9);
    CHECK(inv.residual < 1e-8);
    CHECK(inv.bound_constant > 0.0);
}

TEST_CASE("inverting the curvature forcing gives the leading normal shift") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));

    double c0 = 4.0 / 3.0;
    std::vector<double> Psi(J.n, c0 * chart.H[0]);
    auto inv = invert_jacobi(J, Psi);
    double expected = c0 / (r_star * circle_mode0(r_star, 0.1));
    for (std::size_t i = 0; i < J.n; i += 31)
        CHECK(inv.Phi[i] == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("gap spectrum closed form on the unit circle") {
    auto flat = make_potential(PotentialKind::constant, 1.0);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto r = restrict_to_chart(flat, chart, 3.0);

    auto gap = assemble_gap(chart, r, -3.0, 1.0);
    CHECK(gap.eigenvalues[0] == doctest::Approx(-3.0).epsilon(1e-10));
    CHECK(gap.eigenvalues[1] == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(gap.eigenvalues[2] == doctest::Approx(-2.0).epsilon(1e-9));
    // nearest eigenvalue to zero comes from ell = 2: |4 - 3| = 1
    CHECK(gap.dist_to_spectrum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gap.inv_norm == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gap.admissible);
    CHECK_FALSE(assemble_gap(chart, r, -3.0, 1.0, 1.5).admissible);

    // resonance: eps = sqrt(3)/2 puts ell = 2 exactly at zero
    auto res = assemble_gap(chart, r, -3.0, std::sqrt(3.0) / 2.0);
    CHECK(res.dist_to_spectrum < 1e-8);
    CHECK_FALSE(res.admissible);

    CHECK(resonance_level(chart, r, -3.0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("gap scan at the stationary circle pins the frozen distance") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star);
    auto r = restrict_to_chart(g, chart, 3.0, 0.4);

    double mu2 = 0.7823704013539622;
    double rr = r_star * r_star;
    double expected = std::numeric_limits<double>::infinity();
    for (int ell = 0; ell <= 200; ++ell)
        expected = std::min(expected, std::abs(0.0025 * ell * ell / rr - 3.0 * mu2));

    auto rows = gap_scan(chart, r, -3.0, {0.1, 0.05}, 0.5);
    CHECK(rows.size() == 2);
    CHECK(rows[1].epsilon == 0.05);
    CHECK(rows[1].dist_to_spectrum == doctest::Approx(expected).epsilon(1e-9));
    CHECK(rows[1].dist_to_spectrum == doctest::Approx(0.0372199).epsilon(1e-4));
    CHECK(rows[1].admissible);

    CHECK(resonance_level(chart, r, -3.0) == doctest::Approx(3.0 * mu2 * rr).epsilon(1e-12));

    std::ostringstream os;
    write_gap_csv(rows, os);
    std::istringstream is(os.str());
    std::string header, line1, line2;
    std::getline(is, header);
    std::getline(is, line1);
    std::getline(is, line2);
    CHECK(header == "epsilon,dist_to_spectrum,admissible,inv_norm");
    CHECK(line2.substr(0, 5) == "0.050");
    CHECK(std::count(line2.begin(), line2.end(), ',') == 3);
}

TEST_CASE("negative-eigenvalue counts follow the one-dimensional growth law") {
    auto flat = make_potential(PotentialKind::constant, 1.0);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0, 512);
    auto r = restrict_to_chart(flat, chart, 3.0);

    auto rep = weyl_count_check(chart, r, -3.0,
                                {0.1, 0.0707, 0.05, 0.0354, 0.025, 0.0177, 0.0125, 0.01});
    REQUIRE(rep.counts.size() == 8);
    auto closed = [](double eps) {
        return 2 * static_cast<int>(std::floor(std::sqrt(3.0) / eps)) + 1;
    };
    CHECK(rep.counts[0] == closed(0.1));
    CHECK(rep.counts[2] == closed(0.05));
    CHECK(rep.counts[7] == closed(0.01));
    // halving eps doubles the count within one per branch
    CHECK(std::abs(rep.counts[2] - 2 * rep.counts[0]) <= 2);
    CHECK(std::abs(rep.fitted_exponent + 1.0) < 0.1);
}

TEST_CASE("jacobi spectrum serializes mode labels") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto chart = build_chart(ChartKind::circle_in_plane, 1, r_star, 32);
    auto J = assemble_jacobi(chart, restrict_to_chart(g, chart, 3.0, 0.4));
    std::ostringstream os;
    write_jacobi_spectrum_csv(J, os);
    std::istringstream is(os.str());
    std::string header, first;
    std::getline(is, header);
    std::getline(is, first);
    CHECK(header == "mode,eigenvalue");
    CHECK(first.substr(0, 2) == "0,");
    double q0 = circle_mode0(r_star, 0.1);
    CHECK(std::stod(first.substr(2)) == doctest::Approx(q0).epsilon(1e-9));
    std::size_t rows = 1;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == 32);
}

TEST_CASE("stationarity flag reflects the residual") {
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto off = build_chart(ChartKind::circle_in_plane, 1, 0.5);
    auto Joff = assemble_jacobi(off, restrict_to_chart(g, off, 3.0, 0.2));
    CHECK_FALSE(Joff.stationary);
    CHECK(Joff.residual_sup > 1e-2);
}
