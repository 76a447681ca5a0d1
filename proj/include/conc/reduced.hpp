#pragma once

#include <memory>
#include <vector>

#include "conc/ansatz.hpp"
#include "conc/field.hpp"
#include "conc/geom.hpp"
#include "conc/grid.hpp"

namespace conc::reduced {

// ---------------------------------------------------------------------------
// Norm surrogates
// ---------------------------------------------------------------------------
//
// The convergence theory is phrased in weighted Holder norms; on the grid we
// use fixed discrete surrogates that preserve every scaling the estimates
// rely on (sup parts, derivative weights, exponential transverse weight,
// Holder quotients at grid scale).  All "norm" quantities below refer to
// these surrogates.

/// C^{2,alpha} surrogate of a periodic spine function:
/// sup|f| + sup|f'| + holder(f'') with spectral derivatives.
double section_norm(const Grid1D& gy, const std::vector<double>& f, double alpha = 0.5);

/// Scaled C^2 surrogate of a periodic spine amplitude:
/// holder(e) + eps sup|e'| + eps^2 sup|e''|.
double amplitude_norm(const Grid1D& gy, const std::vector<double>& e, double eps,
                      double alpha = 0.5);

/// Exponentially weighted transverse norm of a tube field with the scaled
/// tangential derivative weights:
///   max over {f, f_xi, f_xixi, eps f_y, eps^2 f_yy, eps f_yxi} of
///   sup e^{rho |xi|} |.|, plus the weighted adjacent-node Holder quotient of
///   the pure transverse second derivative.
double weighted_field_norm(const ansatz::AnsatzContext& ctx, const Field2D& f,
                           double eps, double rho = 0.5, double alpha = 0.5);

/// Weighted C^{0,alpha} surrogate of a transverse load (no derivatives):
/// sup e^{rho|xi|} |f| plus the weighted adjacent-node quotient.
double weighted_load_norm(const ansatz::AnsatzContext& ctx, const Field2D& f,
                          double rho = 0.5, double alpha = 0.5);

// ---------------------------------------------------------------------------
// Far-field domain and coercive solve
// ---------------------------------------------------------------------------

struct OuterFactor;  // factorized discrete operator (implementation detail)

/// Ambient-coordinate discretization of  eps^2 Lap - V  outside and across
/// the concentration tube: a polar grid on the disk r <= spine + 8 delta for
/// a circular spine, a periodic strip |t| <= 8 delta for a straight spine.
/// Cell-centered finite volumes; the far boundary is closed by the one-sided
/// decay condition  d_n phi = -(sqrt(V)/eps) phi  of the homogeneous
/// equation.  Fields live on (spine arc node) x (transverse cell).
struct OuterDomain {
    geom::ChartKind kind = geom::ChartKind::straight_line;
    double spine = 0.0;  ///< circle radius, 0 for the straight spine
    Grid1D gy;           ///< spine arc grid (identical to the chart grid)
    Grid1D gq;           ///< transverse cells: radii (circle) or offsets (strip)
    double eps = 0.0;
    double delta = 0.0;
    std::vector<double> V;     ///< potential per node, [iy * nq + iq]
    std::vector<double> dist;  ///< distance of cell iq to the spine
    double V_floor = 0.0;      ///< min of V over the domain
    std::shared_ptr<OuterFactor> factor;

    std::size_t nq() const { return gq.n; }
    double q(std::size_t iq) const { return gq.x(iq); }
    double value_V(std::size_t iy, std::size_t iq) const { return V[iy * gq.n + iq]; }
};

/// Assemble and factorize the far-field operator.  nq = 0 picks the
/// resolution from the decay scale eps / sqrt(V) (six cells per decay
/// length across the domain).
OuterDomain build_outer(const ansatz::AnsatzContext& ctx, double eps, double delta,
                        std::size_t nq = 0);

/// Discrete operator applied to a field on the outer grid (eps^2 Lap_h - V
/// with the Robin closure folded into the boundary rows).
Field2D outer_apply(const OuterDomain& dom, const Field2D& u);

struct CoerciveResult {
    Field2D phib;               ///< solution on the outer grid
    double load_sup = 0.0;      ///< sup of the clipped load actually solved
    double sup = 0.0;           ///< sup |phib|
    double inner_sup = 0.0;     ///< sup |phib| over dist <= delta / 2
    double split_norm = 0.0;    ///< far part + eps^{-1} near part (with scaled FD derivatives)
    double bound_constant = 0.0;  ///< split_norm / load_sup (0 for zero load)
    double solve_residual = 0.0;  ///< sup |A phib - load| of the linear solve
};

/// Solve  (eps^2 Lap - V) phib = (1 - eta_delta) psi  on the outer grid.
/// The inner-region clipping (1 - eta_delta), with eta_delta the unit bump
/// of the tube distance at scale delta, is applied to the load here, so psi
/// is the raw far-field load.
CoerciveResult coercive_solve(const OuterDomain& dom, const Field2D& psi);

// ---------------------------------------------------------------------------
// Transverse model solve
// ---------------------------------------------------------------------------

struct ModelSolveResult {
    Field2D phis;                 ///< solution on the tube grid
    double residual = 0.0;        ///< sup of the discrete equation residual
    double projection_sup = 0.0;  ///< largest removed symmetry component (relative)
    double bound_constant = 0.0;  ///< weighted_field_norm(phis) / weighted_load_norm(rhs)
    int sweeps = 0;               ///< variable-coefficient correction sweeps used
};

/// Solve the transverse model equation
///   phi_xixi - phi + p w0^{p-1} phi + mu^{-2} eps^2 phi_yy = rhs
/// on the complement of the translation and amplitude directions, by spine
/// Fourier modes (exact for constant mu, Picard-corrected otherwise).
/// The per-node projections of rhs on the two directions must be below
/// tol_proj times the load scale (ProjectionDefect otherwise); they are
/// removed exactly before the solve.
ModelSolveResult model_linear_solve(const ansatz::AnsatzContext& ctx, double eps,
                                    const Field2D& rhs, double tol_proj = 1e-8);

/// Smallest eigenvalue of the transverse operator -d^2/dxi^2 + 1 - p w0^{p-1}
/// on the complement of the translation and amplitude directions (inverse
/// power iteration).  Positivity of this margin is the injectivity estimate
/// behind the model solve; the value matches the profile-level constant.
double model_injectivity_margin(const ansatz::AnsatzContext& ctx);

// ---------------------------------------------------------------------------
// Error components at the centred state
// ---------------------------------------------------------------------------

/// Sizes of the four reduced-system loads at the centred state (no
/// far-field correction, no transverse correction, the free section at its
/// solvability value, zero amplitude):
///   outer_load     sup of the far-field load,
///   model_load     weighted norm of the projected interior load,
///   section_load   sup of the kernel-direction projection (gauge removed
///                  by construction at the centred section),
///   amplitude_load sup of the amplitude-direction projection.
struct ErrorComponents {
    double eps = 0.0;
    int I = 0;
    double outer_load = 0.0;
    double model_load = 0.0;
    double section_load = 0.0;
    double amplitude_load = 0.0;
};

ErrorComponents error_components_at_zero(const ansatz::AnsatzContext& ctx, int I,
                                         double eps, double delta);

/// The same across an epsilon list, with fitted log-log slopes.  The theory
/// gives lower bounds I+1, I+1, I+2, I+1 on the four exponents (the measured
/// decay can be steeper: the far-field load carries an extra exponential
/// factor from the tube clipping).
struct ErrorComponentScan {
    std::vector<ErrorComponents> rows;
    double outer_fit = 0.0;
    double model_fit = 0.0;
    double section_fit = 0.0;
    double amplitude_fit = 0.0;
};

ErrorComponentScan error_component_scan(const ansatz::AnsatzContext& ctx, int I,
                                        const std::vector<double>& eps_list, double delta);

// ---------------------------------------------------------------------------
// The reduced fixed-point solve
// ---------------------------------------------------------------------------

struct SolveOptions {
    int I = 4;              ///< expansion depth (>= 4 for a one-dimensional spine)
    double delta = 0.0;     ///< tube scale; 0 picks 0.25 x (circle radius) or 0.25
    double lambda = 10.0;   ///< iterate-ball radius multiplier
    double tol_fp = 1e-10;  ///< fixed-point stop on the ball-scaled update
    double tol_final = 1e-6;  ///< target for the assembled equation residual
    int max_iter = 48;
    double damping = 1.0;           ///< update relaxation factor
    bool allow_damping_retry = true;  ///< restart once at damping 0.5 on failure
    double gap_factor = 0.5;        ///< admissibility: spectral distance >= factor * eps
    double rho = 0.5;               ///< transverse weight exponent
    double alpha = 0.5;             ///< Holder exponent of the surrogates
    /// Updates whose driving projection falls below
    /// floor x max(1, load scale) are skipped: the driver is at measurement
    /// granularity and amplifying it would only inject noise.
    double driver_floor = 1e-11;
    std::size_t outer_nq = 0;       ///< far-field cells (0: automatic)
};

/// One row per completed sweep: the ball norms of the four components and
/// the ratio of successive ball-scaled update sizes.
struct IterationRow {
    int iter = 0;
    double norm_phib = 0.0;
    double norm_phistar = 0.0;
    double norm_Phi = 0.0;
    double norm_e = 0.0;
    double ratio = 0.0;
};

struct ReducedSolution {
    // final state
    Field2D phis;             ///< transverse correction (tube grid)
    Field2D phib;             ///< far-field correction (outer grid)
    std::vector<double> Phi;  ///< free section
    std::vector<double> e;    ///< amplitude
    ansatz::GlobalApproximation W;  ///< assembled approximation at the final state
    OuterDomain outer;

    // iteration record
    std::vector<IterationRow> trace;
    int iterations = 0;
    bool converged = false;
    double contraction_ratio = 0.0;  ///< max update ratio over the contracting range
    double damping_used = 1.0;
    bool in_ball = true;          ///< every iterate stayed in the lambda-ball
    double ball_margin = 0.0;     ///< max over iterates of (norm / ball radius)

    // certification of the assembled solution
    double residual_tube = 0.0;   ///< exact-operator residual over the tube grid
    double residual_outer = 0.0;  ///< far-field finite-difference residual (dist >= fd_cut)
    double final_residual = 0.0;  ///< max of the two
    double fd_cut = 0.0;          ///< distance beyond which the FD residual is certified
    double u_min = 0.0;           ///< min of the assembled solution over both grids
    double positivity_floor = 0.0;  ///< rounding floor 128 eps_mach max|u|
    bool positive = false;          ///< u_min > -positivity_floor
    double profile_mismatch = 0.0;  ///< sup |u - h w0| over the tube grid
    double gap_distance = 0.0;      ///< spectral distance of the amplitude operator

    double eps = 0.0;
    int I = 0;
    double delta = 0.0;
    double lambda = 0.0;
};

/// Solve the four coupled corrections (far field, transverse, section,
/// amplitude) by damped Gauss-Seidel sweeps from the centred state, with the
/// interior load assembled through the exact scaled operator at every sweep.
/// Throws ResonantEpsilon when the amplitude operator fails the spectral-gap
/// admissibility test, ProjectionDefect when a projected load violates its
/// solvability structure, NotContracting when updates grow twice in a row
/// even after the damping retry, and SolverDivergence when an iterate
/// escapes five times the ball or the sweep budget is exhausted.
ReducedSolution solve_reduced_system(const ansatz::AnsatzContext& ctx, double eps,
                                     const SolveOptions& opts);

}  // namespace conc::reduced
