#include "conc/k_ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "conc/errors.hpp"

namespace conc::kops {

namespace {

constexpr double pi = 3.14159265358979323846;

/// Periodic spectral differentiation matrices on n uniform nodes over a
/// period of length L (n even).
Eigen::MatrixXd spectral_d1(std::size_t n, double L) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    double h = 2.0 * pi / static_cast<double>(n);
    double scale = 2.0 * pi / L;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            std::ptrdiff_t d = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j);
            double sgn = (d % 2 == 0) ? 1.0 : -1.0;
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                scale * 0.5 * sgn / std::tan(0.5 * h * static_cast<double>(d));
        }
    return D;
}

Eigen::MatrixXd spectral_d2(std::size_t n, double L) {
    Eigen::MatrixXd D(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    double h = 2.0 * pi / static_cast<double>(n);
    double scale = (2.0 * pi / L) * (2.0 * pi / L);
    double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    -scale * (nn * nn / 12.0 + 1.0 / 6.0);
                continue;
            }
            std::ptrdiff_t d = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j);
            double sgn = (d % 2 == 0) ? 1.0 : -1.0;
            double s = std::sin(0.5 * h * static_cast<double>(d));
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                -scale * sgn * 0.5 / (s * s);
        }
    return D;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double radial_residual(const pot::PotentialModel& model, double sigma, double r) {
    std::vector<double> z{r, 0.0};
    double dVr = model.gradient(z)[0];
    return sigma * dVr + model.value(z) / r;
}

} // namespace

double weighted_energy(const geom::FermiChart&, const pot::ChartRestriction& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.ybar.n; ++i) s += std::pow(r.V[i], r.sigma);
    return s * r.ybar.h;
}

StationaryResidual stationary_residual(const geom::FermiChart& chart,
                                       const pot::ChartRestriction& r) {
    StationaryResidual out;
    std::size_t n = r.ybar.n;
    int N = r.N;
    out.field.assign(n, std::vector<double>(static_cast<std::size_t>(N), 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < N; ++j) {
            double v = r.sigma * r.dV[i][static_cast<std::size_t>(j)] +
                       r.V[i] * chart.H[static_cast<std::size_t>(j)];
            out.field[i][static_cast<std::size_t>(j)] = v;
            out.sup_norm = std::max(out.sup_norm, std::abs(v));
        }
    return out;
}

double find_stationary_radius(const pot::PotentialModel& model, double sigma,
                              double rlo, double rhi) {
    const int samples = 64;
    double prev_r = rlo, prev_g = radial_residual(model, sigma, rlo);
    for (int i = 1; i <= samples; ++i) {
        double rr = rlo + (rhi - rlo) * static_cast<double>(i) / samples;
        double g = radial_residual(model, sigma, rr);
        if (prev_g == 0.0) return prev_r;
        if ((prev_g > 0.0) != (g > 0.0)) {
            return brent_root([&](double x) { return radial_residual(model, sigma, x); },
                              prev_r, rr);
        }
        prev_r = rr;
        prev_g = g;
    }
    throw NoSignChange("find_stationary_radius: first variation has no zero in the bracket");
}

JacobiOperator assemble_jacobi(const geom::FermiChart& chart, const pot::ChartRestriction& r) {
    JacobiOperator J;
    J.chart = chart;
    J.restriction = r;
    J.n = r.ybar.n;
    J.N = r.N;
    std::size_t n = J.n;
    int N = J.N;
    std::size_t dim = n * static_cast<std::size_t>(N);

    auto res = stationary_residual(chart, r);
    J.residual_sup = res.sup_norm;
    J.stationary = res.sup_norm < 1e-8 * r.V2;

    Eigen::MatrixXd D1 = spectral_d1(n, chart.length);
    Eigen::MatrixXd D2 = spectral_d2(n, chart.length);

    // tangential logarithmic derivative of V, spectral
    Eigen::VectorXd Vvec = to_eigen(r.V);
    Eigen::VectorXd dVt = D1 * Vvec;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
        double drift = r.sigma * dVt(static_cast<Eigen::Index>(i)) / r.V[i];
        for (std::size_t j = 0; j < n; ++j) {
            double d2 = D2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            double d1 = D1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            for (int s = 0; s < N; ++s)
                A(static_cast<Eigen::Index>(i * static_cast<std::size_t>(N) + static_cast<std::size_t>(s)),
                  static_cast<Eigen::Index>(j * static_cast<std::size_t>(N) + static_cast<std::size_t>(s))) +=
                    d2 + drift * d1;
        }
        for (int s = 0; s < N; ++s)
            for (int k = 0; k < N; ++k) {
                double gk = chart.gamma[static_cast<std::size_t>(k)];
                double gs = chart.gamma[static_cast<std::size_t>(s)];
                double b = -chart.R_nttn(k, s) + gk * gs + gk * gs / r.sigma -
                           r.sigma / r.V[i] * r.d2V[i][static_cast<std::size_t>(s * N + k)];
                A(static_cast<Eigen::Index>(i * static_cast<std::size_t>(N) + static_cast<std::size_t>(s)),
                  static_cast<Eigen::Index>(i * static_cast<std::size_t>(N) + static_cast<std::size_t>(k))) += b;
            }
    }

    J.weights.resize(dim);
    Eigen::VectorXd W(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (int s = 0; s < N; ++s) {
            double w = r.ybar.h * std::pow(r.V[i], r.sigma);
            J.weights[i * static_cast<std::size_t>(N) + static_cast<std::size_t>(s)] = w;
            W(static_cast<Eigen::Index>(i * static_cast<std::size_t>(N) + static_cast<std::size_t>(s))) = w;
        }

    Eigen::MatrixXd F = W.asDiagonal() * A;
    double scale = F.cwiseAbs().maxCoeff();
    J.asymmetry = (F - F.transpose()).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);

    Eigen::MatrixXd Fs = 0.5 * (F + F.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        Fs, Eigen::MatrixXd(W.asDiagonal()));

    J.matrix.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            J.matrix[i * dim + j] = A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

    J.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + dim);
    J.eigenvectors.resize(dim * dim);
    for (std::size_t ev = 0; ev < dim; ++ev)
        for (std::size_t i = 0; i < dim; ++i)
            J.eigenvectors[ev * dim + i] =
                solver.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ev));
    return J;
}

std::vector<double> apply_jacobi(const JacobiOperator& J, const std::vector<double>& Phi) {
    std::size_t dim = J.n * static_cast<std::size_t>(J.N);
    if (Phi.size() != dim) throw GridMismatch("apply_jacobi: section size mismatch");
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += J.matrix[i * dim + j] * Phi[j];
        out[i] = s;
    }
    return out;
}

double weighted_inner(const JacobiOperator& J, const std::vector<double>& Phi,
                      const std::vector<double>& Psi) {
    std::size_t dim = J.n * static_cast<std::size_t>(J.N);
    if (Phi.size() != dim || Psi.size() != dim)
        throw GridMismatch("weighted_inner: section size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += J.weights[i] * Phi[i] * Psi[i];
    return s;
}

double quadratic_form(const JacobiOperator& J, const std::vector<double>& Phi) {
    std::size_t n = J.n;
    int N = J.N;
    std::size_t dim = n * static_cast<std::size_t>(N);
    if (Phi.size() != dim) throw GridMismatch("quadratic_form: section size mismatch");
    const auto& r = J.restriction;

    Eigen::MatrixXd D1 = spectral_d1(n, J.chart.length);
    // derivative of each component along the curve
    std::vector<std::vector<double>> dPhi(static_cast<std::size_t>(N), std::vector<double>(n, 0.0));
    for (int s = 0; s < N; ++s)
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                v += D1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                     Phi[j * static_cast<std::size_t>(N) + static_cast<std::size_t>(s)];
            dPhi[static_cast<std::size_t>(s)][i] = v;
        }

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double grad2 = 0.0, curv = 0.0, hess = 0.0, gg = 0.0, hh = 0.0;
        for (int s = 0; s < N; ++s) {
            double ps = Phi[i * static_cast<std::size_t>(N) + static_cast<std::size_t>(s)];
            grad2 += dPhi[static_cast<std::size_t>(s)][i] * dPhi[static_cast<std::size_t>(s)][i];
            gg += J.chart.gamma[static_cast<std::size_t>(s)] * ps;
            hh += J.chart.H[static_cast<std::size_t>(s)] * ps;
            for (int k = 0; k < N; ++k) {
                double pk = Phi[i * static_cast<std::size_t>(N) + static_cast<std::size_t>(k)];
                curv += J.chart.R_nttn(k, s) * pk * ps;
                hess += r.d2V[i][static_cast<std::size_t>(s * N + k)] * pk * ps;
            }
        }
        double integrand = grad2 + curv + r.sigma / r.V[i] * hess - gg * gg - hh * hh / r.sigma;
        total += r.ybar.h * std::pow(r.V[i], r.sigma) * integrand;
    }
    return total;
}

double nondegeneracy_check(const JacobiOperator& J) {
    double m = std::numeric_limits<double>::infinity();
    for (double ev : J.eigenvalues) m = std::min(m, std::abs(ev));
    return m;
}

InversionResult invert_jacobi(const JacobiOperator& J, const std::vector<double>& Psi,
                              double tol_nd) {
    if (nondegeneracy_check(J) <= tol_nd)
        throw DegenerateOperator("invert_jacobi: eigenvalue within tolerance of zero");
    std::size_t dim = J.n * static_cast<std::size_t>(J.N);
    if (Psi.size() != dim) throw GridMismatch("invert_jacobi: section size mismatch");

    // expand on the weight-orthonormal eigenbasis
    InversionResult out;
    out.Phi.assign(dim, 0.0);
    for (std::size_t ev = 0; ev < dim; ++ev) {
        double c = 0.0;
        for (std::size_t i = 0; i < dim; ++i)
            c += J.weights[i] * J.eigenvectors[ev * dim + i] * Psi[i];
        c /= J.eigenvalues[ev];
        for (std::size_t i = 0; i < dim; ++i) out.Phi[i] += c * J.eigenvectors[ev * dim + i];
    }

    auto JPhi = apply_jacobi(J, out.Phi);
    double sup_psi = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        out.residual = std::max(out.residual, std::abs(JPhi[i] - Psi[i]));
        sup_psi = std::max(sup_psi, std::abs(Psi[i]));
    }

    Eigen::MatrixXd D1 = spectral_d1(J.n, J.chart.length);
    Eigen::MatrixXd D2 = spectral_d2(J.n, J.chart.length);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int s = 0; s < J.N; ++s) {
        Eigen::VectorXd comp(static_cast<Eigen::Index>(J.n));
        for (std::size_t i = 0; i < J.n; ++i)
            comp(static_cast<Eigen::Index>(i)) =
                out.Phi[i * static_cast<std::size_t>(J.N) + static_cast<std::size_t>(s)];
        s0 = std::max(s0, comp.cwiseAbs().maxCoeff());
        s1 = std::max(s1, (D1 * comp).cwiseAbs().maxCoeff());
        s2 = std::max(s2, (D2 * comp).cwiseAbs().maxCoeff());
    }
    out.bound_constant = (s0 + s1 + s2) / std::max(sup_psi, 1e-300);
    return out;
}

void write_jacobi_spectrum_csv(const JacobiOperator& J, std::ostream& os) {
    std::size_t dim = J.n * static_cast<std::size_t>(J.N);
    os << "mode,eigenvalue\n";
    os << std::setprecision(17);
    // dominant Fourier mode of each eigenvector, highest eigenvalue first
    std::vector<std::size_t> order(dim);
    for (std::size_t i = 0; i < dim; ++i) order[i] = dim - 1 - i;
    for (std::size_t ev : order) {
        std::size_t best = 0;
        double best_power = -1.0;
        for (std::size_t ell = 0; ell <= J.n / 2; ++ell) {
            double power = 0.0;
            for (int s = 0; s < J.N; ++s) {
                double a = 0.0, b = 0.0;
                for (std::size_t i = 0; i < J.n; ++i) {
                    double th = 2.0 * pi * static_cast<double>(ell) * static_cast<double>(i) /
                                static_cast<double>(J.n);
                    double v = J.eigenvectors[ev * dim + i * static_cast<std::size_t>(J.N) +
                                              static_cast<std::size_t>(s)];
                    a += v * std::cos(th);
                    b += v * std::sin(th);
                }
                power += a * a + b * b;
            }
            if (power > best_power) {
                best_power = power;
                best = ell;
            }
        }
        os << best << ',' << J.eigenvalues[ev] << '\n';
    }
}

namespace {

GapOperator gap_from_eigenvalues(std::vector<double> eigs, double eps, double lambda0, double c) {
    GapOperator g;
    g.epsilon = eps;
    g.lambda0 = lambda0;
    std::sort(eigs.begin(), eigs.end());
    g.eigenvalues = std::move(eigs);
    g.dist_to_spectrum = std::numeric_limits<double>::infinity();
    for (double ev : g.eigenvalues) g.dist_to_spectrum = std::min(g.dist_to_spectrum, std::abs(ev));
    g.admissible = g.dist_to_spectrum >= c * eps;
    g.inv_norm = 1.0 / g.dist_to_spectrum;
    return g;
}

} // namespace

GapOperator assemble_gap(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                         double lambda0, double eps, double c) {
    std::size_t n = r.ybar.n;
    Eigen::MatrixXd G = -eps * eps * spectral_d2(n, chart.length);
    for (std::size_t i = 0; i < n; ++i)
        G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += lambda0 * r.V[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (G + G.transpose()));
    std::vector<double> eigs(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    return gap_from_eigenvalues(std::move(eigs), eps, lambda0, c);
}

std::vector<GapOperator> gap_scan(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                                  double lambda0, const std::vector<double>& epsilons, double c) {
    std::size_t n = r.ybar.n;
    double vmin = *std::min_element(r.V.begin(), r.V.end());
    double vmax = *std::max_element(r.V.begin(), r.V.end());
    std::vector<GapOperator> out;
    out.reserve(epsilons.size());
    if (vmax - vmin <= 1e-12 * vmax) {
        // constant coefficient: one Laplacian spectrum serves every epsilon
        Eigen::MatrixXd L = -spectral_d2(n, chart.length);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (L + L.transpose()));
        for (double eps : epsilons) {
            std::vector<double> eigs(n);
            for (std::size_t i = 0; i < n; ++i)
                eigs[i] = eps * eps * solver.eigenvalues()(static_cast<Eigen::Index>(i)) +
                          lambda0 * r.V[0];
            out.push_back(gap_from_eigenvalues(std::move(eigs), eps, lambda0, c));
        }
        return out;
    }
    for (double eps : epsilons) out.push_back(assemble_gap(chart, r, lambda0, eps, c));
    return out;
}

double resonance_level(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                       double lambda0) {
    double mean = 0.0;
    for (double v : r.V) mean += v;
    mean /= static_cast<double>(r.V.size());
    double ratio = chart.length / (2.0 * pi);
    return -lambda0 * mean * ratio * ratio;
}

void write_gap_csv(const std::vector<GapOperator>& rows, std::ostream& os) {
    os << "epsilon,dist_to_spectrum,admissible,inv_norm\n";
    os << std::setprecision(17);
    for (const auto& g : rows)
        os << g.epsilon << ',' << g.dist_to_spectrum << ',' << (g.admissible ? 1 : 0) << ','
           << g.inv_norm << '\n';
}

WeylReport weyl_count_check(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                            double lambda0, const std::vector<double>& epsilons) {
    WeylReport rep;
    rep.epsilons = epsilons;
    auto scans = gap_scan(chart, r, lambda0, epsilons, 0.0);
    std::vector<double> lx, ly;
    for (const auto& g : scans) {
        int count = 0;
        for (double ev : g.eigenvalues)
            if (ev < 0.0) ++count;
        rep.counts.push_back(count);
        if (count > 0) {
            lx.push_back(std::log(g.epsilon));
            ly.push_back(std::log(static_cast<double>(count)));
        }
    }
    rep.fitted_exponent = (lx.size() >= 2) ? fit_slope(lx, ly) : 0.0;
    return rep;
}

} // namespace conc::kops
