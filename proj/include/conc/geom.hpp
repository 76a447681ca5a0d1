#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "conc/grid.hpp"

namespace conc::geom {

/// Ambient space of constant sectional curvature: R^n for kappa = 0, the
/// sphere of radius 1/sqrt(kappa) for kappa > 0.
struct AmbientSpace {
    int n = 2;
    double kappa = 0.0;
};

enum class ChartKind {
    circle_in_plane,   ///< round circle in a coordinate plane of R^n
    straight_line,     ///< periodic straight line (flat torus geodesic)
    great_circle,      ///< great circle in the round sphere
};

std::string chart_kind_name(ChartKind kind);

/// Fermi chart around a closed curve (k = 1) with an adapted parallel
/// orthonormal frame. The instances are homogeneous: the second fundamental
/// form and curvature data are constant along the curve, and the arc-length
/// parametrization makes the induced metric the identity.
struct FermiChart {
    ChartKind kind = ChartKind::straight_line;
    AmbientSpace ambient;
    int k = 1;                ///< curve dimension
    int N = 1;                ///< codimension
    double radius = 1.0;      ///< circle radius (circle_in_plane only)
    double length = 1.0;      ///< period of the arc-length coordinate
    Grid1D ybar;              ///< periodic arc-length grid on [0, length)

    std::vector<double> gamma;  ///< Gamma^1_{1i}, i = 0..N-1
    std::vector<double> H;      ///< mean curvature components H_j = -Gamma^a_{aj}

    double gt() const { return 1.0; }  ///< induced metric coefficient (arc length)

    bool minimal(double tol = 1e-14) const;

    /// Curvature components of the ambient space at the curve, in the adapted
    /// orthonormal frame. Tangent index values are ignored (k = 1).
    double R_nttn(int i, int l) const;             ///< R_{i a a l}, normal-tangent-tangent-normal
    double R_nnnn(int i, int j, int s, int l) const; ///< R_{i j s l}, all normal

    /// Ambient position of the Fermi point (ybar, xbar), as Euclidean
    /// coordinates of R^n (kappa = 0) or of R^{n+1} restricted to the sphere.
    std::vector<double> ambient_point(double yb, const std::vector<double>& xbar) const;

    /// Adapted frame at arc length yb: first the tangent, then the N normals,
    /// in the same Euclidean coordinates as ambient_point.
    std::vector<std::vector<double>> frame(double yb) const;
};

FermiChart build_chart(ChartKind kind, int codim, double param, std::size_t ny = 256);

/// Metric blocks at one Fermi point, to the displayed order in epsilon.
/// Entries are stored for k = 1: a single tangent slot.
struct MetricExpansion {
    double g_tt = 1.0;              ///< tangent block
    std::vector<double> g_tn;       ///< mixed block, size N
    std::vector<double> g_nn;       ///< normal block, N*N row-major
    double logdet = 0.0;

    double inv_tt = 1.0;            ///< displayed inverse expansion
    std::vector<double> inv_tn;
    std::vector<double> inv_nn;
};

/// Second-order expansion of the shifted-coordinate metric at a point with
/// combined normal offset xi_phi = xi + Phi and tangential shift derivative
/// dphi^j = d_ybar Phi^j.
MetricExpansion metric_expansion_at(const FermiChart& chart, double eps,
                                    const std::vector<double>& xi_phi,
                                    const std::vector<double>& dphi);

/// Exact metric of the scaled manifold in the shifted coordinates (y, xi),
/// as a dense (1+N)^2 row-major matrix; ordering: tangent slot first.
std::vector<double> exact_metric(const FermiChart& chart, double eps, double y,
                                 const std::vector<double>& xi,
                                 const std::function<double(double, int)>& phi);

double exact_logdet(const FermiChart& chart, double eps, double y,
                    const std::vector<double>& xi,
                    const std::function<double(double, int)>& phi);

/// Scalar test data at one point: value and derivatives in (y, xi).
struct FieldJet {
    double u = 0.0;
    double du_y = 0.0;                ///< d_y u
    std::vector<double> du_xi;        ///< d_j u
    double d2u_yy = 0.0;              ///< d^2_yy u
    std::vector<double> d2u_yxi;      ///< d^2_{y j} u
    std::vector<double> d2u_xixi;     ///< d^2_{i j} u, N*N row-major
};

/// Normal-shift data at one base point ybar.
struct ShiftJet {
    std::vector<double> phi, dphi, d2phi;  ///< Phi^j and its ybar-derivatives
};

/// The displayed second-order expansion of the Laplace-Beltrami operator
/// applied to the jet, with remainder O(eps^3).
double laplacian_display(const FermiChart& chart, double eps, const std::vector<double>& xi,
                         const FieldJet& jet, const ShiftJet& shift);

/// Exact Laplace-Beltrami value at (y, xi) by finite differences of the
/// closed-form metric, assembled as
///   g^{ab} d2_{ab} u + (d_a g^{ab}) d_b u + (1/2) g^{ab} d_a(log det g) d_b u.
double laplacian_exact(const FermiChart& chart, double eps, double y,
                       const std::vector<double>& xi,
                       const std::function<double(double, const std::vector<double>&)>& u,
                       const std::function<double(double, int)>& phi);

/// One row of an expansion-accuracy table.
struct ExpansionCheckRow {
    double epsilon = 0.0;
    std::string term;
    double expansion = 0.0;
    double exact = 0.0;
    double abs_err = 0.0;
};

/// Compare every displayed metric block and the displayed Laplacian against
/// their exact counterparts at a built-in smooth test configuration.
std::vector<ExpansionCheckRow> expansion_check(const FermiChart& chart,
                                               const std::vector<double>& epsilons);

/// Fit of log(abs_err) against log(epsilon) for the rows with this term.
double expansion_order(const std::vector<ExpansionCheckRow>& rows, const std::string& term);

/// Measured constants of the remainder class bound
///   |R(eps, xi)| <= C eps^q (1 + |xi|^d),
/// plus the two-point Lipschitz quotient in Phi.
struct ErrorClassReport {
    double q_fit = 0.0;
    double d_fit = 0.0;
    double bound_constant = 0.0;
    double lipschitz_constant = 0.0;
};

ErrorClassReport error_class_bound_check(const FermiChart& chart);

/// Columns: epsilon,term,expansion,exact,abs_err
void write_expansion_csv(const std::vector<ExpansionCheckRow>& rows, std::ostream& os);

/// Frames, Christoffel data, and mean curvature per ybar node.
void write_chart_json(const FermiChart& chart, std::ostream& os);

} // namespace conc::geom
