#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "conc/banded.hpp"
#include "conc/grid.hpp"
#include "conc/profile.hpp"

namespace conc::linop {

/// Surface area of the unit sphere S^{N-1}.
double sphere_area(int N);

/// Fourth-order radial discretization of one angular sector of
/// L = -Delta_{R^N} + 1 - p w^{p-1}:
///   L_ell u = -u'' - (N-1)/r u' + [ell(ell+N-2)/r^2 + 1 - p w^{p-1}] u
/// on the profile grid with a Dirichlet condition at r_max. Vectors are
/// full-grid (size grid.n); inactive nodes are pinned to zero.
class SectorOperator {
  public:
    SectorOperator() = default;
    SectorOperator(const profile::GroundState& gs, int ell);

    int ell() const { return ell_; }
    const Grid1D& grid() const { return grid_; }
    std::size_t first_active() const { return i0_; }

    std::vector<double> apply(const std::vector<double>& u_full) const;
    /// Direct banded solve L u = f (no kernel handling).
    std::vector<double> solve(const std::vector<double>& f_full) const;
    /// Copy of the stencil matrix with `shift` subtracted from the diagonal.
    BandedMatrix shifted_matrix(double shift) const;

    /// Inner product matching the R^N integral of the represented functions
    /// (angular factor included).
    double inner(const std::vector<double>& a, const std::vector<double>& b) const;
    double norm(const std::vector<double>& a) const;

    /// Symmetric tridiagonal (finite-volume, second-order) form of the same
    /// sector on an arbitrary grid step, for Sturm eigenvalue counts.
    struct Tridiag {
        std::vector<double> d, e;      // symmetrized entries
        std::vector<double> cellw;     // cell measures
        std::size_t i0 = 0;
        Grid1D grid;
    };
    static Tridiag finite_volume(const profile::GroundState& gs, int ell, double h);

  private:
    void assemble(const profile::GroundState& gs);

    int ell_ = 0;
    profile::LimitProblem prob_;
    Grid1D grid_;
    std::size_t i0_ = 0;
    std::size_t active_ = 0;
    double w_end_ = 0.0;           // profile value at r_max, for the end-row potential
    BandedMatrix a_;
    BandedLU lu_;
    std::vector<double> quad_;     // simpson * r^{N-1} * angular factor
};

struct IdentityReport {
    std::string identity;
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_error = 0.0;
};

/// Assembled linearized operator: both angular sectors, the negative
/// eigenpair, the translation kernel, and the base constants.
struct LinearizedOperator {
    profile::GroundState gs;
    SectorOperator s0, s1;
    double lambda0 = 0.0;           ///< minimal eigenvalue (ell = 0), Richardson-refined
    double lambda1 = 0.0;           ///< bottom of the ell = 1 sector (should vanish)
    std::vector<double> Z;          ///< ground eigenfunction, int_{R^N} Z^2 = 1, Z(0) > 0
    std::vector<double> kernel;     ///< w0'(r): radial part of the translation kernel
    double c0 = 0.0;                ///< int_{R^N} |d_1 w0|^2
    double gamma0 = 0.0;            ///< coercivity constant on the orthogonal complement

    double eval_Z(double r) const;  ///< cubic interpolation of Z off the grid
};

LinearizedOperator assemble(const profile::GroundState& gs);

/// Apply the sector stencil (ell = 0 for radial data, 1 for xi-type data).
std::vector<double> apply_L0(const LinearizedOperator& op, const std::vector<double>& u,
                             int ell);

/// Fredholm-aware solve. In the ell = 1 sector the right-hand side must be
/// orthogonal to the kernel within tol_orth * ||f||, and the solution is
/// returned kernel-orthogonal. ell = 0 is a plain solve.
std::vector<double> solve_orthogonal(const LinearizedOperator& op, const std::vector<double>& f,
                                     int ell, double tol_orth = 1e-8);

/// -w0/(p-1) - (r/2) w0' sampled on the profile grid.
std::vector<double> u0_explicit(const profile::GroundState& gs);

struct SpecialSolutions {
    std::vector<double> U0;   ///< ell = 0 solve of L U0 = w0
    std::vector<double> U1;   ///< radial part of the ell = 1 solve L U_j = d_j w0 + sigma^{-1} xi^j w0
    double u0_explicit_sup_err = 0.0;
    double cG = 0.0;          ///< int { d_s Z + sigma^{-1} Z xi^s + p(p-1) w^{p-2} Z U_s } d_s w0
};

SpecialSolutions special_solutions(const LinearizedOperator& op);

/// Minimal Rayleigh quotient on the discrete complement of span{kernel, Z}.
double coercivity_estimate(const LinearizedOperator& op);

IdentityReport sigma_identity_report(const LinearizedOperator& op);
IdentityReport a_term_identity_check(const LinearizedOperator& op, const SpecialSolutions& sp);
std::vector<IdentityReport> moment_identity_checks(const LinearizedOperator& op);

/// Columns: r,value
void write_radial_csv(const Grid1D& grid, const std::vector<double>& values, std::ostream& os);

/// Full-line restriction (N = 1 only) shared by the tangentially coupled
/// modules: profile samples, kernel and ground-mode samples, projections, and
/// factored line operators with Dirichlet ends.
class LineContext {
  public:
    LineContext() = default;
    LineContext(const profile::GroundState& gs, const LinearizedOperator& op,
                const SpecialSolutions& sp, const Grid1D& line_grid);

    const Grid1D& grid() const { return grid_; }
    const std::vector<double>& w() const { return w_; }
    const std::vector<double>& wp() const { return wp_; }
    const std::vector<double>& kernel() const { return kernel_; }
    const std::vector<double>& Zline() const { return Z_; }
    const std::vector<double>& U0line() const { return U0_; }
    const std::vector<double>& U1line() const { return U1_; }
    const std::vector<double>& quad() const { return quad_; }
    double c0() const { return c0_; }
    double cG() const { return cG_; }
    double lambda0() const { return lambda0_; }
    double sigma() const { return sigma_; }
    double p() const { return p_; }

    double inner(const std::vector<double>& a, const std::vector<double>& b) const;

    /// Coefficients of f along the kernel (normalized by c0) and along Z.
    struct Projection {
        double along_kernel = 0.0;
        double along_Z = 0.0;
    };
    Projection project(const std::vector<double>& f) const;
    /// f minus its kernel and Z components.
    std::vector<double> perp(const std::vector<double>& f) const;
    /// f minus its kernel component only.
    std::vector<double> perp_kernel(const std::vector<double>& f) const;

    /// Solve L0 u = f with the kernel direction projected out of both sides;
    /// throws FredholmViolation if f has a kernel component above tol_orth.
    std::vector<double> solve_kernel_orthogonal(const std::vector<double>& f,
                                                double tol_orth = 1e-8) const;

    /// Solve (L0 + kappa) u = f restricted to the complement of {kernel, Z}.
    /// The factorization for each kappa is cached.
    std::vector<double> solve_perp_shifted(const std::vector<double>& f, double kappa) const;

    std::vector<double> apply_L0(const std::vector<double>& u) const;

  private:
    Grid1D grid_;
    double p_ = 3.0, sigma_ = 0.0, c0_ = 0.0, cG_ = 0.0, lambda0_ = 0.0;
    std::vector<double> w_, wp_, kernel_, Z_, U0_, U1_, quad_;
    BandedMatrix L0_;
    BandedLU lu_;
    mutable std::vector<std::pair<double, BandedLU>> shifted_; // kappa -> factorization
};

} // namespace conc::linop
