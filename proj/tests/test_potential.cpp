#include "conc/potential.hpp"

#include <cmath>
#include <sstream>

#include "conc/errors.hpp"
#include "doctest.h"

using conc::geom::ChartKind;
using conc::geom::build_chart;
using namespace conc::pot;

TEST_CASE("factory sets exact bounds per model") {
    auto c = make_potential(PotentialKind::constant, 2.5);
    CHECK(c.V1 == 2.5);
    CHECK(c.V2 == 2.5);

    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    CHECK(g.V1 == 0.1);
    CHECK(g.V2 == 1.1);

    auto q = make_potential(PotentialKind::polynomial, 0.0, 10.0);
    CHECK(q.V1 == 1.0);
    CHECK(q.V2 == 101.0);

    CHECK_THROWS_AS(make_potential(PotentialKind::constant, 0.0), conc::BoundViolation);
    CHECK_THROWS_AS(make_potential(PotentialKind::gaussian_floored, -0.2), conc::BoundViolation);
}

TEST_CASE("evaluators match closed forms") {
    std::vector<double> z{0.3, -0.4};
    double r2 = 0.25;

    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    double e = std::exp(-0.5 * r2);
    CHECK(g.value(z) == doctest::Approx(0.1 + e).epsilon(1e-15));
    auto gr = g.gradient(z);
    CHECK(gr[0] == doctest::Approx(-0.3 * e).epsilon(1e-15));
    CHECK(gr[1] == doctest::Approx(0.4 * e).epsilon(1e-15));
    auto H = g.hessian(z);
    CHECK(H[0] == doctest::Approx(e * (0.09 - 1.0)).epsilon(1e-14));
    CHECK(H[1] == doctest::Approx(e * (0.3 * -0.4)).epsilon(1e-14));
    CHECK(H[3] == doctest::Approx(e * (0.16 - 1.0)).epsilon(1e-14));

    auto q = make_potential(PotentialKind::polynomial);
    CHECK(q.value(z) == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(q.gradient(z)[1] == doctest::Approx(-0.8).epsilon(1e-15));
    CHECK(q.hessian(z)[0] == 2.0);
    CHECK(q.hessian(z)[1] == 0.0);
}

TEST_CASE("constant potential restricts trivially") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto model = make_potential(PotentialKind::constant, 1.0);
    auto r = restrict_to_chart(model, chart, 3.0);
    CHECK(r.N == 1);
    CHECK(r.sigma == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(r.V.size() == chart.ybar.n);
    for (std::size_t i = 0; i < r.ybar.n; ++i) {
        CHECK(r.V[i] == 1.0);
        CHECK(r.mu[i] == 1.0);
        CHECK(r.h[i] == 1.0);
        CHECK(r.dV[i][0] == 0.0);
        CHECK(r.d2V[i][0] == 0.0);
    }
}

TEST_CASE("floored gaussian on a circle matches radial closed forms") {
    double rad = 0.9;
    auto chart = build_chart(ChartKind::circle_in_plane, 1, rad);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto r = restrict_to_chart(model, chart, 3.0, 0.4);

    double e = std::exp(-0.5 * rad * rad);
    for (std::size_t i = 0; i < r.ybar.n; i += 37) {
        CHECK(r.V[i] == doctest::Approx(0.1 + e).epsilon(1e-14));
        // outward normal: radial derivative of the gaussian
        CHECK(r.dV[i][0] == doctest::Approx(-rad * e).epsilon(1e-13));
        CHECK(r.d2V[i][0] == doctest::Approx(e * (rad * rad - 1.0)).epsilon(1e-13));
    }
}

TEST_CASE("stationary-radius value of the floored gaussian is pinned") {
    double rstar = 0.8742798843392404;
    auto chart = build_chart(ChartKind::circle_in_plane, 1, rstar);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto r = restrict_to_chart(model, chart, 3.0, 0.4);
    CHECK(r.V[0] == doctest::Approx(0.7823704013539622).epsilon(1e-14));
    CHECK(r.mu[0] * r.mu[0] == doctest::Approx(r.V[0]).epsilon(1e-15));
}

TEST_CASE("polynomial on the unit circle gives mu = sqrt(2)") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto model = make_potential(PotentialKind::polynomial);
    auto r = restrict_to_chart(model, chart, 3.0);
    for (std::size_t i = 0; i < r.ybar.n; i += 41) {
        CHECK(r.V[i] == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(r.mu[i] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
        CHECK(r.h[i] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
        CHECK(r.dV[i][0] == doctest::Approx(2.0).epsilon(1e-13));
        CHECK(r.d2V[i][0] == doctest::Approx(2.0).epsilon(1e-13));
    }
}

TEST_CASE("derived fields satisfy their defining identities") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 0.8);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    for (double p : {2.0, 3.0}) {
        auto r = restrict_to_chart(model, chart, p, 0.3);
        for (std::size_t i = 0; i < r.ybar.n; i += 29) {
            CHECK(r.mu[i] * r.mu[i] == doctest::Approx(r.V[i]).epsilon(1e-15));
            CHECK(std::pow(r.h[i], p - 1.0) == doctest::Approx(r.V[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("restriction to the sphere is constant for radial potentials") {
    // every point of the round sphere has the same |z|, so both models below
    // compose to constants; the normal Hessian must vanish exactly, which
    // exercises the exponential-map correction term
    auto chart = build_chart(ChartKind::great_circle, 2, 1.0);
    double rho = 1.0;

    auto q = make_potential(PotentialKind::polynomial, 0.0, 2.0);
    auto rq = restrict_to_chart(q, chart, 3.0, 0.3);
    CHECK(rq.N == 2);
    for (std::size_t i = 0; i < rq.ybar.n; i += 53) {
        CHECK(rq.V[i] == doctest::Approx(1.0 + rho * rho).epsilon(1e-14));
        for (int a = 0; a < 2; ++a) CHECK(std::abs(rq.dV[i][static_cast<std::size_t>(a)]) < 1e-13);
        for (int a = 0; a < 4; ++a) CHECK(std::abs(rq.d2V[i][static_cast<std::size_t>(a)]) < 1e-12);
    }

    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto rg = restrict_to_chart(g, chart, 3.0, 0.3);
    double e = std::exp(-0.5 * rho * rho);
    for (std::size_t i = 0; i < rg.ybar.n; i += 53) {
        CHECK(rg.V[i] == doctest::Approx(0.1 + e).epsilon(1e-14));
        for (int a = 0; a < 4; ++a) CHECK(std::abs(rg.d2V[i][static_cast<std::size_t>(a)]) < 1e-12);
    }
}

TEST_CASE("gaussian normal gradient on a circle in higher codimension") {
    auto chart = build_chart(ChartKind::circle_in_plane, 3, 0.7);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto r = restrict_to_chart(model, chart, 3.0, 0.3);
    double e = std::exp(-0.5 * 0.49);
    CHECK(r.dV[0].size() == 3);
    CHECK(r.dV[0][0] == doctest::Approx(-0.7 * e).epsilon(1e-13));
    CHECK(std::abs(r.dV[0][1]) < 1e-14);
    CHECK(std::abs(r.dV[0][2]) < 1e-14);
    // radial direction steepens, flat directions see the pure gaussian dip
    CHECK(r.d2V[0][0] == doctest::Approx(e * (0.49 - 1.0)).epsilon(1e-12));
    CHECK(r.d2V[0][4] == doctest::Approx(-e).epsilon(1e-12));
    CHECK(r.d2V[0][8] == doctest::Approx(-e).epsilon(1e-12));
    CHECK(std::abs(r.d2V[0][1]) < 1e-13);
}

TEST_CASE("second-order expansion has a third-order remainder") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto rep = taylor_check(model, chart, 3.0);
    CHECK(rep.q_fit >= 2.9);
    CHECK(rep.q_fit <= 4.2);
    CHECK(rep.bound_constant > 0.0);
    CHECK(rep.bound_constant < 10.0);
}

TEST_CASE("expansion terminates for quadratic and symmetric cases") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto q = make_potential(PotentialKind::polynomial);
    auto rep = taylor_check(q, chart, 3.0);
    CHECK(std::isinf(rep.q_fit));
    CHECK(rep.bound_constant < 1e-8);

    auto gc = build_chart(ChartKind::great_circle, 2, 1.0);
    auto g = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto rep2 = taylor_check(g, gc, 3.0);
    CHECK(std::isinf(rep2.q_fit));
    CHECK(rep2.bound_constant < 1e-8);
}

TEST_CASE("tube samples outside the working region raise a bound error") {
    auto chart = build_chart(ChartKind::circle_in_plane, 1, 1.0);
    auto model = make_potential(PotentialKind::polynomial, 0.0, 1.5);
    CHECK_THROWS_AS(restrict_to_chart(model, chart, 3.0, 1.0), conc::BoundViolation);
    CHECK_NOTHROW(restrict_to_chart(model, chart, 3.0, 0.4));
}

TEST_CASE("restriction serializes with per-component columns") {
    auto chart = build_chart(ChartKind::circle_in_plane, 2, 1.0, 16);
    auto model = make_potential(PotentialKind::gaussian_floored, 0.1);
    auto r = restrict_to_chart(model, chart, 3.0, 0.3);
    std::ostringstream os;
    write_restriction_csv(r, os);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "ybar,V,mu,h,dV_1,dV_2,d2V_11,d2V_12,d2V_21,d2V_22");
    std::size_t rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == 16);
}
