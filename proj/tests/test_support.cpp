#include <doctest.h>

#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <vector>

#include "conc/banded.hpp"
#include "conc/errors.hpp"
#include "conc/fft.hpp"
#include "conc/field.hpp"
#include "conc/grid.hpp"

using namespace conc;

TEST_CASE("simpson weights integrate cubics exactly") {
    // odd node count
    {
        Grid1D g{0.0, 0.01, 301};
        auto w = simpson_weights(g.n, g.h);
        double s = 0.0, s3 = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) {
            s += w[i];
            s3 += w[i] * std::pow(g.x(i), 3);
        }
        double b = g.xmax();
        CHECK(s == doctest::Approx(b).epsilon(1e-14));
        CHECK(s3 == doctest::Approx(b * b * b * b / 4.0).epsilon(1e-13));
    }
    // even node count triggers the 3/8 closure
    {
        Grid1D g{0.0, 0.01, 300};
        auto w = simpson_weights(g.n, g.h);
        double s3 = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) s3 += w[i] * std::pow(g.x(i), 3);
        double b = g.xmax();
        CHECK(s3 == doctest::Approx(b * b * b * b / 4.0).epsilon(1e-13));
    }
}

TEST_CASE("simpson converges at fourth order on a smooth integrand") {
    auto integral = [](std::size_t n) {
        Grid1D g{0.0, 2.0 / (n - 1), n};
        auto w = simpson_weights(g.n, g.h);
        double s = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) s += w[i] * std::exp(-g.x(i));
        return s;
    };
    double exact = 1.0 - std::exp(-2.0);
    double e1 = std::abs(integral(101) - exact);
    double e2 = std::abs(integral(201) - exact);
    CHECK(e1 / e2 > 12.0); // ~16 for fourth order
}

TEST_CASE("hermite cubic reproduces cubics and their derivative") {
    auto f = [](double x) { return 1.0 + x - 2 * x * x + 0.5 * x * x * x; };
    auto df = [](double x) { return 1.0 - 4 * x + 1.5 * x * x; };
    double xa = 0.3, xb = 0.7, xq = 0.47;
    auto hv = hermite_cubic(xa, f(xa), df(xa), xb, f(xb), df(xb), xq);
    CHECK(hv.f == doctest::Approx(f(xq)).epsilon(1e-14));
    CHECK(hv.df == doctest::Approx(df(xq)).epsilon(1e-13));
}

TEST_CASE("brent finds a root of cos to near machine precision") {
    double r = brent_root([](double x) { return std::cos(x); }, 1.0, 2.0);
    CHECK(std::abs(r - 1.5707963267948966) < 1e-12);
    CHECK_THROWS_AS(brent_root([](double x) { return 1.0 + x * x; }, -1.0, 1.0), NoBracket);
}

TEST_CASE("banded LU solves a pentadiagonal system against a dense oracle") {
    const std::size_t n = 40;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BandedMatrix a(n, 2, 2);
    std::vector<std::vector<double>> dense(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(n - 1, i + 2); ++j) {
            double v = u(rng) + (i == j ? 6.0 : 0.0);
            a.at(i, j) = v;
            dense[i][j] = v;
        }
    std::vector<double> x_true(n);
    for (auto& v : x_true) v = u(rng);
    std::vector<double> b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b[i] += dense[i][j] * x_true[j];

    // apply matches the dense product
    auto ax = a.apply(x_true);
    for (std::size_t i = 0; i < n; ++i) CHECK(ax[i] == doctest::Approx(b[i]).epsilon(1e-13));

    BandedLU lu(a);
    auto x = lu.solved(b);
    for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(x_true[i]).epsilon(1e-11));
}

TEST_CASE("banded LU pivots a matrix with a zero leading diagonal entry") {
    BandedMatrix a(3, 1, 1);
    a.at(0, 0) = 0.0;
    a.at(0, 1) = 1.0;
    a.at(1, 0) = 2.0;
    a.at(1, 1) = 1.0;
    a.at(1, 2) = 1.0;
    a.at(2, 1) = 1.0;
    a.at(2, 2) = 3.0;
    BandedLU lu(a);
    std::vector<double> b{1.0, 8.0, 10.0}; // image of x = (2, 1, 3)
    auto x = lu.solved(b);
    CHECK(x[0] == doctest::Approx(2.0));
    CHECK(x[1] == doctest::Approx(1.0));
    CHECK(x[2] == doctest::Approx(3.0));
}

TEST_CASE("sturm count and bisection locate tridiagonal eigenvalues") {
    // -u'' on [0,pi] Dirichlet, n interior nodes: eigenvalues (2/h^2)(1-cos(m h)) exactly
    const std::size_t n = 200;
    const double pi = 3.14159265358979323846;
    double h = pi / (n + 1);
    std::vector<double> d(n, 2.0 / (h * h)), e(n - 1, -1.0 / (h * h));
    for (std::size_t m = 1; m <= 3; ++m) {
        double exact = 2.0 / (h * h) * (1.0 - std::cos(m * h));
        double lam = tridiag_eigenvalue(d, e, m - 1);
        CHECK(lam == doctest::Approx(exact).epsilon(1e-11));
    }
    CHECK(sturm_count_below(d, e, 10.0) == 3); // eigenvalues ~1, 4, 9 below 10
}

TEST_CASE("fft inverts and differentiates trigonometric data exactly") {
    const std::size_t n = 256;
    const double pi = 3.14159265358979323846;
    double L = 2.0 * pi;
    std::vector<double> f(n), d1(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        double y = L * i / n;
        f[i] = std::sin(3 * y) + 0.5 * std::cos(7 * y);
        d1[i] = 3 * std::cos(3 * y) - 3.5 * std::sin(7 * y);
        d2[i] = -9 * std::sin(3 * y) - 24.5 * std::cos(7 * y);
    }
    auto back = ifft_real(fft(f));
    for (std::size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(f[i]).epsilon(1e-13));
    auto g1 = spectral_derivative(f, L, 1);
    auto g2 = spectral_derivative(f, L, 2);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(g1[i] - d1[i]) < 1e-11);
        CHECK(std::abs(g2[i] - d2[i]) < 1e-10);
    }
}

TEST_CASE("field arithmetic respects grids") {
    Grid1D gy{0.0, 0.1, 8}, gx{-1.0, 0.5, 5};
    Field2D a(gy, gx), b(gy, gx);
    a.fill([](double y, double x) { return y + x; });
    b.fill([](double y, double x) { return y * x; });
    Field2D c = a + b;
    CHECK(c.at(3, 2) == doctest::Approx(a.at(3, 2) + b.at(3, 2)));
    Field2D d(gy, Grid1D{-1.0, 0.5, 6});
    CHECK_THROWS_AS(c += d, GridMismatch);
    auto line = std::vector<double>{1, 2, 3, 4, 5};
    auto lf = from_line(gy, gx, line);
    CHECK(lf.at(7, 4) == 5.0);
    lf.scale_rows(std::vector<double>(8, 2.0));
    CHECK(lf.at(7, 4) == 10.0);
}

TEST_CASE("fit_slope recovers a power law from log data") {
    std::vector<double> lx, ly;
    for (double e : {0.1, 0.05, 0.025, 0.0125}) {
        lx.push_back(std::log(e));
        ly.push_back(std::log(3.7 * std::pow(e, 2.5)));
    }
    CHECK(fit_slope(lx, ly) == doctest::Approx(2.5).epsilon(1e-12));
}
