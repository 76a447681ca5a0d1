#pragma once

#include <iosfwd>
#include <vector>

#include "conc/geom.hpp"
#include "conc/grid.hpp"
#include "conc/potential.hpp"

namespace conc::kops {

/// Weighted volume of the curve: integral of V^sigma over arc length,
/// periodic trapezoid rule (spectrally accurate on the uniform grid).
double weighted_energy(const geom::FermiChart& chart, const pot::ChartRestriction& r);

/// First-variation residual sigma * dV + V * H per node and normal component.
/// The curve is stationary for the weighted volume iff this vanishes.
struct StationaryResidual {
    std::vector<std::vector<double>> field;  ///< [node][j]
    double sup_norm = 0.0;
};

StationaryResidual stationary_residual(const geom::FermiChart& chart,
                                       const pot::ChartRestriction& r);

/// Radius at which a circle centered in a radial potential is stationary:
/// root of sigma * V'(r) + V(r)/r in [rlo, rhi]. Throws NoSignChange when
/// the bracket contains no root (e.g. constant potentials).
double find_stationary_radius(const pot::PotentialModel& model, double sigma,
                              double rlo, double rhi);

/// Second-variation operator on normal sections, discretized with Fourier
/// spectral differentiation on the periodic grid. Sections are stored
/// node-major: Phi[i * N + s] is component s at node i.
struct JacobiOperator {
    geom::FermiChart chart;
    pot::ChartRestriction restriction;
    std::size_t n = 0;  ///< grid nodes
    int N = 1;          ///< normal components
    std::vector<double> matrix;   ///< dense (n*N)^2 row-major action of the operator
    std::vector<double> weights;  ///< quadrature weights h * V^sigma per node
    double asymmetry = 0.0;       ///< max weighted-symmetry defect (scaled)
    bool stationary = true;       ///< first-variation residual below tolerance
    double residual_sup = 0.0;

    std::vector<double> eigenvalues;    ///< ascending
    std::vector<double> eigenvectors;   ///< column ev stored at [ev * n * N + idx]
};

JacobiOperator assemble_jacobi(const geom::FermiChart& chart,
                               const pot::ChartRestriction& r);

std::vector<double> apply_jacobi(const JacobiOperator& J, const std::vector<double>& Phi);

/// Weighted inner product <Phi, Psi> with weight V^sigma over arc length.
double weighted_inner(const JacobiOperator& J, const std::vector<double>& Phi,
                      const std::vector<double>& Psi);

/// Second-variation quadratic form of the weighted volume, assembled
/// independently of the operator matrix:
///   integral V^sigma { |Phi'|^2 + R(Phi) + (sigma/V) d2V[Phi,Phi]
///                      - GG(Phi) - sigma^{-1} H(Phi)^2 }.
/// Equals <-J Phi, Phi> in the weighted product, and d2/dt2 of the weighted
/// volume along the variation Phi at a stationary curve.
double quadratic_form(const JacobiOperator& J, const std::vector<double>& Phi);

/// Minimal eigenvalue modulus; the operator is non-degenerate iff this
/// exceeds the tolerance (default 1e-6).
double nondegeneracy_check(const JacobiOperator& J);

struct InversionResult {
    std::vector<double> Phi;
    double residual = 0.0;        ///< sup |J Phi - Psi|
    double bound_constant = 0.0;  ///< (sup|Phi| + sup|Phi'| + sup|Phi''|) / sup|Psi|
};

/// Solve J Phi = Psi. Throws DegenerateOperator when the smallest eigenvalue
/// modulus is at or below tol_nd.
InversionResult invert_jacobi(const JacobiOperator& J, const std::vector<double>& Psi,
                              double tol_nd = 1e-6);

void write_jacobi_spectrum_csv(const JacobiOperator& J, std::ostream& os);

/// Scalar gap operator -eps^2 Lap_K + lambda0 mu^2 with its spectrum.
struct GapOperator {
    double epsilon = 0.0;
    double lambda0 = 0.0;
    std::vector<double> eigenvalues;  ///< ascending
    double dist_to_spectrum = 0.0;
    bool admissible = false;          ///< dist >= c * eps
    double inv_norm = 0.0;            ///< 1 / dist
};

GapOperator assemble_gap(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                         double lambda0, double eps, double c = 0.5);

std::vector<GapOperator> gap_scan(const geom::FermiChart& chart,
                                  const pot::ChartRestriction& r, double lambda0,
                                  const std::vector<double>& epsilons, double c = 0.5);

/// Resonance level of the scan in the eps^2 ell^2 normalization:
/// -lambda0 * mean(mu^2) * (L / 2 pi)^2.
double resonance_level(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                       double lambda0);

void write_gap_csv(const std::vector<GapOperator>& rows, std::ostream& os);

/// Counting check for the gap operator: negative-eigenvalue counts across
/// epsilon and the fitted exponent of count ~ eps^q (expected q = -1).
struct WeylReport {
    std::vector<double> epsilons;
    std::vector<int> counts;
    double fitted_exponent = 0.0;
};

WeylReport weyl_count_check(const geom::FermiChart& chart, const pot::ChartRestriction& r,
                            double lambda0, const std::vector<double>& epsilons);

} // namespace conc::kops
