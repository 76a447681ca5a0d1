#include "conc/potential.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "conc/errors.hpp"

namespace conc::pot {

namespace {

double norm2(const std::vector<double>& z) {
    double s = 0.0;
    for (double v : z) s += v * v;
    return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct NodeData {
    double V = 0.0;
    std::vector<double> dV;   // normal gradient, size N
    std::vector<double> d2V;  // normal Hessian, N*N row-major
};

/// Value and normal derivatives of V composed with the chart map at xbar = 0.
NodeData node_data(const PotentialModel& model, const geom::FermiChart& chart, double yb) {
    int N = chart.N;
    std::vector<double> z = chart.ambient_point(yb, std::vector<double>(static_cast<std::size_t>(N), 0.0));
    auto fr = chart.frame(yb);
    std::size_t m = z.size();

    NodeData nd;
    nd.V = model.value(z);
    std::vector<double> g = model.gradient(z);
    std::vector<double> Hm = model.hessian(z);

    nd.dV.assign(static_cast<std::size_t>(N), 0.0);
    nd.d2V.assign(static_cast<std::size_t>(N * N), 0.0);
    for (int i = 0; i < N; ++i) {
        const auto& Ei = fr[static_cast<std::size_t>(1 + i)];
        nd.dV[static_cast<std::size_t>(i)] = dot(g, Ei);
        for (int j = 0; j < N; ++j) {
            const auto& Ej = fr[static_cast<std::size_t>(1 + j)];
            double hij = 0.0;
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b)
                    hij += Ei[a] * Hm[a * m + b] * Ej[b];
            // on the sphere the chart map is the exponential map, whose
            // second derivative at the center is -kappa * position
            if (chart.ambient.kappa > 0.0 && i == j) hij -= chart.ambient.kappa * dot(g, z);
            nd.d2V[static_cast<std::size_t>(i * N + j)] = hij;
        }
    }
    return nd;
}

} // namespace

std::string potential_kind_name(PotentialKind kind) {
    switch (kind) {
        case PotentialKind::constant: return "constant";
        case PotentialKind::gaussian_floored: return "gaussian_floored";
        case PotentialKind::polynomial: return "polynomial";
    }
    return "unknown";
}

double PotentialModel::value(const std::vector<double>& z) const {
    switch (kind) {
        case PotentialKind::constant: return param;
        case PotentialKind::gaussian_floored: return param + std::exp(-0.5 * norm2(z));
        case PotentialKind::polynomial: return 1.0 + norm2(z);
    }
    return 0.0;
}

std::vector<double> PotentialModel::gradient(const std::vector<double>& z) const {
    std::vector<double> g(z.size(), 0.0);
    switch (kind) {
        case PotentialKind::constant: break;
        case PotentialKind::gaussian_floored: {
            double e = std::exp(-0.5 * norm2(z));
            for (std::size_t a = 0; a < z.size(); ++a) g[a] = -z[a] * e;
            break;
        }
        case PotentialKind::polynomial:
            for (std::size_t a = 0; a < z.size(); ++a) g[a] = 2.0 * z[a];
            break;
    }
    return g;
}

std::vector<double> PotentialModel::hessian(const std::vector<double>& z) const {
    std::size_t m = z.size();
    std::vector<double> Hm(m * m, 0.0);
    switch (kind) {
        case PotentialKind::constant: break;
        case PotentialKind::gaussian_floored: {
            double e = std::exp(-0.5 * norm2(z));
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b)
                    Hm[a * m + b] = e * (z[a] * z[b] - (a == b ? 1.0 : 0.0));
            break;
        }
        case PotentialKind::polynomial:
            for (std::size_t a = 0; a < m; ++a) Hm[a * m + a] = 2.0;
            break;
    }
    return Hm;
}

PotentialModel make_potential(PotentialKind kind, double param, double region_radius) {
    PotentialModel model;
    model.kind = kind;
    model.param = param;
    model.region_radius = region_radius;
    switch (kind) {
        case PotentialKind::constant:
            if (param <= 0.0) throw BoundViolation("constant potential must be positive");
            model.V1 = model.V2 = param;
            break;
        case PotentialKind::gaussian_floored:
            if (param < 0.0) throw BoundViolation("gaussian floor must not be negative");
            // the lower bound on the working region keeps a zero floor usable
            model.V1 = param + std::exp(-0.5 * region_radius * region_radius);
            model.V2 = param + 1.0;
            break;
        case PotentialKind::polynomial:
            model.V1 = 1.0;
            model.V2 = 1.0 + region_radius * region_radius;
            break;
    }
    return model;
}

ChartRestriction restrict_to_chart(const PotentialModel& model, const geom::FermiChart& chart,
                                   double p, double tube_radius) {
    ChartRestriction r;
    r.ybar = chart.ybar;
    r.N = chart.N;
    r.p = p;
    r.sigma = (p + 1.0) / (p - 1.0) - 0.5 * chart.N;
    r.V1 = model.V1;
    r.V2 = model.V2;

    std::size_t n = chart.ybar.n;
    r.V.resize(n);
    r.mu.resize(n);
    r.h.resize(n);
    r.dV.resize(n);
    r.d2V.resize(n);

    double tol = 1e-12 * std::max(1.0, model.V2);
    auto check_bounds = [&](double v, double yb, double mag) {
        if (v < model.V1 - tol || v > model.V2 + tol) {
            std::ostringstream msg;
            msg << "potential value " << v << " outside [" << model.V1 << ", " << model.V2
                << "] at ybar = " << yb << ", |xbar| = " << mag;
            throw BoundViolation(msg.str());
        }
    };

    int N = chart.N;
    for (std::size_t i = 0; i < n; ++i) {
        double yb = chart.ybar.x(i);
        NodeData nd = node_data(model, chart, yb);
        check_bounds(nd.V, yb, 0.0);
        r.V[i] = nd.V;
        r.mu[i] = std::sqrt(nd.V);
        r.h[i] = std::pow(nd.V, 1.0 / (p - 1.0));
        r.dV[i] = nd.dV;
        r.d2V[i] = nd.d2V;

        // sample the tube along the frame axes and the diagonal direction
        for (double mag : {0.5 * tube_radius, tube_radius}) {
            for (int j = 0; j < N; ++j) {
                for (double sgn : {1.0, -1.0}) {
                    std::vector<double> xb(static_cast<std::size_t>(N), 0.0);
                    xb[static_cast<std::size_t>(j)] = sgn * mag;
                    check_bounds(model.value(chart.ambient_point(yb, xb)), yb, mag);
                }
            }
            std::vector<double> xb(static_cast<std::size_t>(N), mag / std::sqrt(double(N)));
            check_bounds(model.value(chart.ambient_point(yb, xb)), yb, mag);
        }
    }
    return r;
}

TaylorReport taylor_check(const PotentialModel& model, const geom::FermiChart& chart, double p) {
    (void)p;
    int N = chart.N;
    std::vector<double> dir(static_cast<std::size_t>(N), 0.0);
    {
        std::vector<double> seed{0.6, -0.8, 0.36, 0.48};
        double s = 0.0;
        for (int j = 0; j < N; ++j) {
            dir[static_cast<std::size_t>(j)] = seed[static_cast<std::size_t>(j) % seed.size()];
            s += dir[static_cast<std::size_t>(j)] * dir[static_cast<std::size_t>(j)];
        }
        for (auto& v : dir) v /= std::sqrt(s);
    }

    std::vector<double> ybs{0.0, chart.length / 4.0, chart.length / 2.0};
    std::vector<double> mags{0.5, 1.5, 3.0, 5.0};
    std::vector<double> epss{0.1, 0.05, 0.025, 0.0125, 0.00625};

    TaylorReport rep;
    rep.q_fit = std::numeric_limits<double>::infinity();
    for (double yb : ybs) {
        NodeData nd = node_data(model, chart, yb);
        for (double mag : mags) {
            std::vector<double> xi(static_cast<std::size_t>(N));
            for (int j = 0; j < N; ++j) xi[static_cast<std::size_t>(j)] = mag * dir[static_cast<std::size_t>(j)];
            std::vector<double> lx, ly;
            for (double eps : epss) {
                std::vector<double> xb(static_cast<std::size_t>(N));
                for (int j = 0; j < N; ++j) xb[static_cast<std::size_t>(j)] = eps * xi[static_cast<std::size_t>(j)];
                double direct = model.value(chart.ambient_point(yb, xb));
                double lin = 0.0, quad = 0.0;
                for (int i = 0; i < N; ++i) {
                    lin += nd.dV[static_cast<std::size_t>(i)] * xi[static_cast<std::size_t>(i)];
                    for (int j = 0; j < N; ++j)
                        quad += xi[static_cast<std::size_t>(i)] *
                                nd.d2V[static_cast<std::size_t>(i * N + j)] *
                                xi[static_cast<std::size_t>(j)];
                }
                double expansion = nd.V + eps * lin + 0.5 * eps * eps * quad;
                double resid = std::abs(direct - expansion);
                double w = eps * eps * eps * (1.0 + mag * mag * mag);
                rep.bound_constant = std::max(rep.bound_constant, resid / w);
                // slope fit restricted to the asymptotic window, as for the
                // metric remainder classes
                if (eps * (mag + 0.5) > 0.15) continue;
                if (resid <= 1e-13 * std::max(1.0, std::abs(direct))) continue;
                lx.push_back(std::log(eps));
                ly.push_back(std::log(resid));
            }
            if (lx.size() >= 3) rep.q_fit = std::min(rep.q_fit, fit_slope(lx, ly));
        }
    }
    return rep;
}

void write_restriction_csv(const ChartRestriction& r, std::ostream& os) {
    os << "ybar,V,mu,h";
    for (int i = 0; i < r.N; ++i) os << ",dV_" << (i + 1);
    for (int i = 0; i < r.N; ++i)
        for (int j = 0; j < r.N; ++j) os << ",d2V_" << (i + 1) << (j + 1);
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t k = 0; k < r.ybar.n; ++k) {
        os << r.ybar.x(k) << ',' << r.V[k] << ',' << r.mu[k] << ',' << r.h[k];
        for (int i = 0; i < r.N; ++i) os << ',' << r.dV[k][static_cast<std::size_t>(i)];
        for (int i = 0; i < r.N * r.N; ++i) os << ',' << r.d2V[k][static_cast<std::size_t>(i)];
        os << '\n';
    }
}

} // namespace conc::pot
