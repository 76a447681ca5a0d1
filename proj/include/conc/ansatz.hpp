#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "conc/banded.hpp"
#include "conc/field.hpp"
#include "conc/geom.hpp"
#include "conc/grid.hpp"
#include "conc/k_ops.hpp"
#include "conc/potential.hpp"
#include "conc/profile.hpp"

namespace conc::ansatz {

// ---------------------------------------------------------------------------
// Smooth cutoff
// ---------------------------------------------------------------------------

/// Smooth transition function: 1 on (-inf, 1], 0 on [2, inf).  On (1, 2) it is
/// the partition quotient f/(f+g) with f(t) = exp(-1/(2-t)), g(t) = exp(-1/(t-1)).
/// Derivatives are evaluated in closed form from the quotient rule; see the
/// README for the explicit expressions.
double bump(double t);
double bump_d1(double t);
double bump_d2(double t);

// ---------------------------------------------------------------------------
// Transverse line toolkit
// ---------------------------------------------------------------------------

/// Discrete machinery on the transverse line grid.  Everything here satisfies
/// its defining equation with respect to the *same* banded derivative stencils
/// used by the expansion engine, so order-by-order cancellations hold to
/// rounding accuracy rather than to discretization accuracy:
///   - w is Newton-refined on the grid: -D2 w + w - |w|^{p-1} w = 0,
///   - kernel and Z are eigenvectors of the symmetric matrix
///     L0 = -D2 + I - p diag(w^{p-1}) computed by shifted inverse iteration,
///   - U0, U1 solve their linear equations through the deflated solver below.
/// D1/D2 are fourth-order centered stencils truncated at the grid ends (the
/// profile decays like exp(-|xi|), so the truncation error is far below
/// rounding for the default half-width).
struct TransverseBasis {
    Grid1D grid;
    double p = 3.0;
    double sigma = 0.0;
    std::vector<double> xi;      ///< node coordinates
    std::vector<double> w;       ///< positive even ground profile (discrete solution)
    std::vector<double> wp;      ///< D1 w: smooth kernel weight used in reported projections
    std::vector<double> kernel;  ///< exact discrete kernel eigenvector (odd), aligned with wp
    std::vector<double> Z;       ///< exact discrete bound-state eigenvector (even), quad(Z^2) = 1
    std::vector<double> U0;      ///< deflated solution of L0 U0 = w
    std::vector<double> U1;      ///< deflated solution of L0 U1 = wp + sigma^{-1} xi w
    double lambda0 = 0.0;        ///< discrete bound-state eigenvalue (Z)
    double c0 = 0.0;             ///< quad(wp * wp)
    double kernel_norm2 = 0.0;   ///< quad(kernel * kernel)
    double newton_residual = 0.0;
    double kernel_residual = 0.0;  ///< |L0 kernel| / |kernel| (Euclidean)
    double z_residual = 0.0;       ///< |(L0 - lambda0) Z| / |Z|
    BandedMatrix D1{1, 0, 0}, D2{1, 0, 0}, L0{1, 0, 0};

    double quad(const std::vector<double>& f) const;  ///< h * sum (spectrally accurate for decaying rows)
    double inner(const std::vector<double>& f, const std::vector<double>& g) const;
    std::vector<double> apply_D1(const std::vector<double>& f) const;
    std::vector<double> apply_D2(const std::vector<double>& f) const;
    std::vector<double> apply_L0(const std::vector<double>& f) const;

    /// Euclidean projection coefficient of f on the exact kernel vector; when
    /// remove is set the component is subtracted from f in place.
    double kernel_component(std::vector<double>& f, bool remove) const;
    double z_component(std::vector<double>& f, bool remove) const;

    /// Solve L0 x = rhs on the orthogonal complement of the exact kernel:
    /// the kernel component of rhs is removed, the banded factorization is
    /// applied, one step of iterative refinement is taken, and the result is
    /// re-projected.  Residuals land near rounding for smooth decaying rhs.
    std::vector<double> solve_deflated(std::vector<double> rhs) const;

    /// Solve (L0 + kappa) x = rhs on the complement of span{kernel, Z}
    /// (both are eigenvectors of the shifted matrix, so the complement is
    /// invariant).  Factorizations are cached per shift.
    std::vector<double> solve_shifted_perp(std::vector<double> rhs, double kappa) const;

    std::shared_ptr<BandedLU> lu;  ///< factorization of L0
    mutable std::map<std::uint64_t, std::shared_ptr<BandedLU>> shift_cache;
};

/// Build the transverse toolkit on the given symmetric grid (odd node count).
/// The radial ground profile seeds the Newton iteration; beyond its sampled
/// range the seed is extended by the known exponential tail.
TransverseBasis build_transverse_basis(const profile::GroundState& gs, const Grid1D& grid);

// ---------------------------------------------------------------------------
// Closed-form normal Taylor tables
// ---------------------------------------------------------------------------

/// Per-node Taylor data of the potential along the normal line, plus the
/// node-independent power series of the warp factor of the chart metric.
/// T[m][node] is the m-th derivative of t -> V(chart point at distance t)
/// at t = 0, obtained in closed form for each potential/chart pair (Gaussian
/// recursion, exact polynomial, constants on spheres).  drift[m] are the
/// series coefficients of A'(t)/A(t) and inv_sq[m] those of A(t)^{-2}, where
/// A is the warp factor of the chart metric.
struct NormalTaylor {
    int order = 0;
    std::vector<std::vector<double>> T;
    std::vector<double> drift;
    std::vector<double> inv_sq;
};

NormalTaylor normal_taylor(const pot::PotentialModel& model, const geom::FermiChart& chart,
                           int order);

// ---------------------------------------------------------------------------
// Context
// ---------------------------------------------------------------------------

/// Everything the expansion engine needs, assembled once per configuration and
/// reusable across epsilon (the construction itself is epsilon-free).
/// Codimension 1 only: the transverse grid is a line.
struct AnsatzContext {
    geom::FermiChart chart;
    pot::PotentialModel model;
    pot::ChartRestriction restr;
    TransverseBasis line;
    kops::JacobiOperator jac;
    bool jac_ok = false;          ///< smallest |eigenvalue| above the degeneracy threshold
    double jac_min_abs_eig = 0.0;
    double jac_tol_nd = 1e-6;

    Grid1D gy;   ///< == chart.ybar
    Grid1D gxi;  ///< transverse line grid

    double p = 3.0;
    double sigma = 0.0;

    // per-node tangential tables (periodic spectral derivatives)
    std::vector<double> V0, mu, hh;        ///< spine potential, sqrt(V), V^{1/(p-1)}
    std::vector<double> Gamma;             ///< tangential connection trace
    std::vector<double> Hvec;              ///< mean curvature component = -Gamma
    std::vector<double> dmu, ddmu;         ///< d/dy and d2/dy2 of mu
    std::vector<double> dloh, ddloh;       ///< h'/h and h''/h
    NormalTaylor tay;

    /// When false, exact_V evaluates the truncated Taylor polynomial instead
    /// of the ambient model; used by consistency tests with synthetic tables.
    bool exact_potential = true;

    double stationary_sup = 0.0;  ///< sup_node |sigma * T1 + V0 * H|
    double tol_stationary = 0.0;  ///< 1e-8 * V2

    double exact_V(std::size_t node, double xbar) const;
    double warp(double t) const;        ///< A(t)
    double warp_ratio(double t) const;  ///< A'(t)/A(t)

    /// Recompute the spectral derivative tables and the stationarity gauge
    /// from V0/mu/hh/tay (call after editing tables in synthetic setups).
    void refresh_tangential();
};

/// Assemble the context: restriction, transverse basis, normal-variation
/// operator, Taylor tables, tangential derivative tables.  The transverse
/// grid defaults to [-20, 20] with spacing 0.02; pass xi_grid to widen it.
AnsatzContext make_context(const geom::FermiChart& chart, const pot::PotentialModel& model,
                           double p, int taylor_order = 8, const Grid1D* xi_grid = nullptr);

// ---------------------------------------------------------------------------
// Expansion state
// ---------------------------------------------------------------------------

/// The inner approximation built order by order:
///   v(eps) = w + sum_{l=1..I} eps^l w_l + eps e Z,
///   transverse seat  xi = mu(y) (xbar/eps - Phi(eps; y)),
///   Phi(eps; y) = sum_{j=0..I-1} eps^j Phi_j(y).
/// w[l-1] stores w_l; Phi[j] stores Phi_j.  w_base[l-1] is the part of w_l
/// independent of Phi_{l-1} (the remaining part is a multiple of U0 per node
/// and is re-attached whenever the section changes).
struct AnsatzExpansion {
    int I = 0;
    double p = 3.0;
    double sigma = 0.0;
    std::vector<Field2D> w;
    std::vector<Field2D> w_base;
    std::vector<std::vector<double>> Phi;
    std::vector<double> e;

    std::vector<double> defect;          ///< per order: sup |kernel load| before enforcing solvability
    std::vector<double> defect_final;    ///< per order: sup |kernel load| after the section solve
    std::vector<double> solve_residual;  ///< per order: sup residual of the deflated solve

    std::vector<double> top_rhs;      ///< solvability load for the free section (top order, section zeroed)
    std::vector<double> top_section;  ///< particular free section solving the load
    double tau = 0.0;                 ///< fitted transverse decay rate of the last correction
};

struct BuildOptions {
    int I = 1;
    std::vector<double> e;        ///< empty means zero
    std::vector<double> Phi_top;  ///< free section Phi_{I-1}; empty means zero
    bool compute_top = true;      ///< assemble the order-(I+1) solvability data
    double tol_project = 1e-11;   ///< relative target for the kernel load after each section solve
    int max_iter = 16;
};

// ---------------------------------------------------------------------------
// Stage builders
// ---------------------------------------------------------------------------

/// Kernel projection of the first-order load per node (diagnostic; no throw).
/// Proportional to the stationarity defect sigma dV + V H of the spine.
std::vector<double> order1_defect(const AnsatzContext& ctx);

struct Order1Result {
    Field2D w11;                  ///< first-order correction (section-free part)
    std::vector<double> defect;   ///< kernel load per node
    double defect_sup = 0.0;
    double formula_gap = 0.0;     ///< sup |w11 + mu^{-1} Gamma U1| (closed-form comparison)
};

/// First-order correction.  Throws FredholmViolation when the kernel load
/// exceeds the stationarity tolerance of the context (the spine is not a
/// stationary configuration); the exception message carries the defect size.
Order1Result build_order1(const AnsatzContext& ctx);

/// The second-order interior load split by its dependence on the zeroth
/// section Phi0 and on the amplitude e: terms free of both at this order
/// (base), terms linear in Phi0 (linear), terms quadratic in Phi0
/// (quadratic), and the amplitude-coupled terms (mode).  Assembled directly
/// from the explicit displays, independently of the power-series engine;
/// used to cross-validate the engine and the projection identities.
struct Order2Terms {
    Field2D base, linear, quadratic, mode;
};
/// w1_base is the section-free first-order correction the engine produced
/// (the displays are evaluated at the same state the engine sees, so the two
/// assemblies must agree to rounding).  Flat ambient charts only.
Order2Terms order2_terms(const AnsatzContext& ctx, const Field2D& w1_base,
                         const std::vector<double>& Phi0, const std::vector<double>& e);

struct Order2Result {
    AnsatzExpansion expansion;  ///< orders 1..2 with the solved section Phi[0]
    std::vector<double> Phi0;
    double identity_base = 0.0;    ///< relative sup kernel projection of the section-free terms
    double identity_linear = 0.0;  ///< relative gap between proj(linear terms) and mu^{-1} c0 (JPhi)
    double identity_mode = 0.0;    ///< relative gap between proj(mode terms) and cG mu^{-1} Gamma e
    double engine_display_gap = 0.0;  ///< relative sup gap between engine load and assembled displays
    double cG = 0.0;                  ///< measured amplitude-coupling projection constant
};

/// Second-order stage: solves the zeroth section from the solvability
/// condition of the second-order load, builds w_2, and cross-validates the
/// display assembly and the projection identities.  Throws DegenerateOperator
/// when the normal-variation operator is degenerate but a nonzero section is
/// required; FredholmViolation when the solvability iteration cannot reach
/// its tolerance (an assembly inconsistency).
Order2Result build_order2(const AnsatzContext& ctx, const std::vector<double>& e);

/// Full construction through order I (I <= 4): solves the sections
/// Phi_0..Phi_{I-2} from the order-by-order solvability conditions, installs
/// the free section Phi_{I-1}, and (optionally) assembles the top-order
/// solvability data used by the outer iteration.  All corrections are built
/// by the power-series engine; the per-order kernel loads are driven to
/// rounding level by a preconditioned affine iteration on the sections.
AnsatzExpansion build_higher(const AnsatzContext& ctx, const BuildOptions& opts);

// ---------------------------------------------------------------------------
// Interior residual
// ---------------------------------------------------------------------------

/// Exact interior equation applied to the expansion at a concrete epsilon on
/// the (y, xi) grid: all chart, potential, and scaling factors are evaluated
/// in closed form (no order truncation).  With subtract_mode_term set, the
/// retained amplitude term eps (lambda0 e - eps^2 mu^{-2} e'') Z is removed;
/// what remains is the load the next corrections would have to absorb.
struct ResidualOptions {
    double rho = 0.5;                ///< transverse weight exponent exp(rho |xi|)
    bool subtract_mode_term = true;  ///< remove the retained amplitude term
    bool keep_fields = false;        ///< store the residual fields in the result
};

struct InteriorResidual {
    double eps = 0.0;
    double raw_sup = 0.0;       ///< sup |residual| over the chart-valid nodes
    double raw_weighted = 0.0;  ///< sup exp(rho |xi|) |residual|
    double sub_sup = 0.0;       ///< same after removing the amplitude term
    double sub_weighted = 0.0;
    /// Fraction of grid nodes excluded because the transverse coordinate
    /// leaves the validity region of the chart (the area factor of a curved
    /// chart vanishes at its focal distance, e.g. at the centre of a circular
    /// spine; for wide grids and moderate eps the tail rows cross it).
    /// Excluded nodes carry no solution mass -- the profile there is at
    /// rounding level -- and are zeroed in the kept fields.
    double masked_fraction = 0.0;
    Field2D raw_field, sub_field;
};

InteriorResidual residual_interior(const AnsatzContext& ctx, const AnsatzExpansion& X,
                                   double eps, const ResidualOptions& opts = {});

/// Inner profile of the expansion assembled at a concrete eps on the (y, xi)
/// grid: w + sum_l eps^l w_l + eps e Z.
Field2D assemble_inner_field(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps);

/// Total transverse section of the expansion at a concrete eps,
/// sum_j eps^j Phi_j per spine node.
std::vector<double> total_section(const AnsatzExpansion& X, double eps, std::size_t ny);

/// Exact scaled interior operator applied to an arbitrary field on the
/// (y, xi) grid at a concrete eps, with the transverse seat translated by the
/// total section of the expansion.  All chart, potential, and scaling factors
/// are evaluated in closed form; the only nonlinearity is the signed power of
/// the field itself.  Nodes outside the validity region of the chart are
/// zeroed exactly as in residual_interior; when mask is non-null it is
/// resized to the grid and receives 1 on valid nodes, 0 on excluded ones.
Field2D scaled_apply(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps,
                     const Field2D& f, Field2D* mask = nullptr);

/// Partial sums of the eps-power loads of the engine at the expansion state
/// (orders 0..M).  The exact residual minus this sum is O(eps^{M+1}); the
/// property is what certifies the engine against the exact evaluator.
Field2D series_residual(const AnsatzContext& ctx, const AnsatzExpansion& X, double eps, int M,
                        bool subtract_mode_term = true);

struct DecayFit {
    double exponent = 0.0;  ///< fitted power of the weighted sup against eps
    std::vector<double> eps;
    std::vector<double> weighted_sup;
};

DecayFit residual_decay(const AnsatzContext& ctx, const AnsatzExpansion& X,
                        const std::vector<double>& eps_list, const ResidualOptions& opts = {});

// ---------------------------------------------------------------------------
// Global approximation
// ---------------------------------------------------------------------------

/// The cut-off global approximation
///   W = eta(|xbar| / (3 delta)) h(y) v(y, mu (xbar/eps - Phi)),
/// supported in the tube |xbar| <= 6 delta, identically equal to the inner
/// profile for |xbar| <= 3 delta.  Evaluation interpolates the stored inner
/// field spectrally along the spine and by degree-7 polynomials across it.
struct GlobalApproximation {
    double eps = 0.0, delta = 0.0, p = 3.0;
    geom::FermiChart chart;
    Grid1D gy, gxi;
    std::vector<double> hh, mu, e, Phi_total;  ///< per-node tables at the assembly epsilon
    Field2D vI;                                ///< inner field w + sum eps^l w_l + eps e Z
    std::vector<std::vector<std::complex<double>>> vI_modes;  ///< per-column spine Fourier data

    double on_spine_min = 0.0;  ///< min over nodes of h * v at xi = 0
    bool positive_core = false; ///< the 3-delta core slice is positive
    double shell_slope = 0.0;   ///< fitted decay rate of sup_y |W| across [delta, 2 delta]
    double slope_bound = 0.0;   ///< -0.9 * min(mu) / eps (the rate the shell fit must beat)

    /// W at a chart point; iy indexes a spine node (fast path).
    double evaluate(std::size_t iy, double xbar) const;
    /// W at arbitrary spine coordinate (spectral interpolation along the spine).
    double evaluate(double ybar, double xbar) const;
    /// Inner profile h * v without the cutoff (same interpolation).
    double inner(std::size_t iy, double xbar) const;
    double inner(double ybar, double xbar) const;
};

/// Assemble the global approximation at (eps, delta).
///
/// The plateau of the cutoff (|xbar| <= 3 delta) and the decay-fit shell
/// (|xbar| <= 2 delta) must lie inside the validity region of the chart;
/// otherwise ChartRadiusExceeded is thrown.  The outer skirt of the cutoff
/// (3 delta < |xbar| < 6 delta) may saturate past a focal distance of a
/// curved chart: for a circular spine the inward tube simply fills in at the
/// centre, so the evaluators return 0 beyond the chart (where the profile is
/// at rounding level anyway).  GridMismatch is thrown when the transverse
/// grid is too narrow to cover the cutoff plateau at this eps.
GlobalApproximation assemble_global(const AnsatzContext& ctx, const AnsatzExpansion& X,
                                    double eps, double delta);

// ---------------------------------------------------------------------------
// Norm surrogates and fits
// ---------------------------------------------------------------------------

/// Discrete Holder-alpha surrogate: sup |f| plus the maximal finite-difference
/// quotient |f(a)-f(b)| / |a-b|^alpha over adjacent node pairs and over pairs
/// at unit distance along each axis.
double holder_sup(const Field2D& f, double alpha);
double holder_sup(const std::vector<double>& f, double h, double alpha, bool periodic);

/// Fitted exponential decay rate of a transverse envelope: least-squares fit
/// of log sup_y |f| against a + k log|xi| + rate |xi| over lo <= |xi| <= hi,
/// returning the rate.  The logarithmic regressor absorbs the power-law
/// prefactors the corrections carry, which a plain line fit would otherwise
/// charge against the exponential rate on a finite window.
double decay_rate(const Field2D& f, double lo, double hi);

}  // namespace conc::ansatz
