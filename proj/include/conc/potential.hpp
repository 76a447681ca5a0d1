#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "conc/geom.hpp"
#include "conc/grid.hpp"

namespace conc::pot {

enum class PotentialKind {
    constant,          ///< V = v0
    gaussian_floored,  ///< V = c + exp(-|z|^2/2)
    polynomial,        ///< V = 1 + |z|^2
};

std::string potential_kind_name(PotentialKind kind);

/// Closed-form potential on the ambient Euclidean coordinates, with exact
/// gradient and Hessian and bounds valid on the ball |z| <= region_radius.
struct PotentialModel {
    PotentialKind kind = PotentialKind::constant;
    double param = 1.0;          ///< constant value, or the Gaussian floor c
    double region_radius = 10.0; ///< radius of the working region
    double V1 = 1.0;             ///< lower bound on the region
    double V2 = 1.0;             ///< upper bound on the region

    double value(const std::vector<double>& z) const;
    std::vector<double> gradient(const std::vector<double>& z) const;
    /// Dense Hessian, m*m row-major for z of size m.
    std::vector<double> hessian(const std::vector<double>& z) const;
};

PotentialModel make_potential(PotentialKind kind, double param = 1.0,
                              double region_radius = 10.0);

/// Potential data restricted to a Fermi chart: per-node value, normal
/// gradient and normal Hessian of the composition with the chart map, and the
/// derived scaling fields.
struct ChartRestriction {
    Grid1D ybar;
    int N = 1;
    double p = 3.0;
    double sigma = 0.0;   ///< (p+1)/(p-1) - N/2
    double V1 = 0.0, V2 = 0.0;

    std::vector<double> V;                 ///< V at xbar = 0, per node
    std::vector<double> mu;                ///< sqrt(V)
    std::vector<double> h;                 ///< V^{1/(p-1)}
    std::vector<std::vector<double>> dV;   ///< normal gradient, [node][i]
    std::vector<std::vector<double>> d2V;  ///< normal Hessian, [node][i*N+j]
};

/// Sample the potential and its normal derivatives on the chart grid. The
/// normal Hessian is that of the composed map, so on a curved ambient space
/// it carries the second-order term of the exponential map. Throws
/// BoundViolation if sampled values in the tube |xbar| <= tube_radius leave
/// [V1, V2].
ChartRestriction restrict_to_chart(const PotentialModel& model,
                                   const geom::FermiChart& chart, double p,
                                   double tube_radius = 0.5);

/// Accuracy report for the second-order normal Taylor expansion of the
/// potential against direct evaluation, measured across epsilon.
struct TaylorReport {
    double q_fit = 0.0;          ///< fitted epsilon-exponent of the remainder
    double bound_constant = 0.0; ///< sup |remainder| / (eps^3 (1 + |xi|^3))
};

TaylorReport taylor_check(const PotentialModel& model,
                          const geom::FermiChart& chart, double p);

/// CSV layout: ybar,V,mu,h,dV_1..dV_N,d2V_11..d2V_NN with 17 digits.
void write_restriction_csv(const ChartRestriction& r, std::ostream& os);

} // namespace conc::pot
