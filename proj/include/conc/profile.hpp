#pragma once

#include <iosfwd>
#include <vector>

#include "conc/grid.hpp"

namespace conc::profile {

/// Transverse limit problem: find the positive radially decreasing solution of
///   -w'' - (N-1)/r w' + w = w^p   on [0, inf),  w'(0) = 0,  w -> 0.
struct LimitProblem {
    int N = 1;
    double p = 3.0;
};

/// sigma = (p+1)/(p-1) - N/2, the scaling exponent attached to the problem.
double sigma_exponent(const LimitProblem& prob);

struct ProfileOptions {
    double r_max = 20.0;          ///< stored grid extent
    double h = 1e-3;              ///< grid step
    double shoot_r_stop = 26.0;   ///< integration horizon for the shooting dichotomy
    double match_threshold = 1e-4; ///< hand over to tail matching once w drops below
    int max_bracket_growth = 40;
    int bisect_iters = 120;
    int polish_iters = 16;
    double polish_tol = 1e-12;    ///< relative matching tolerance at the interface
};

/// Radial ground state with a matched exponential tail. Values inside
/// [0, r_max] come from the stored grid (cubic Hermite off nodes); beyond
/// r_max the asymptotic tail c r^{-(N-1)/2} e^{-r} (with series corrections
/// for N = 2) is used.
struct GroundState {
    LimitProblem prob;
    Grid1D grid;
    std::vector<double> w;   ///< profile values at the nodes
    std::vector<double> wp;  ///< first derivative at the nodes
    double center = 0.0;     ///< w(0)
    double tail_amp = 0.0;   ///< amplitude of the far-field asymptotics
    double match_radius = 0.0;

    double value(double r) const;
    double deriv(double r) const;
    double second(double r) const; ///< w'' recovered from the equation

    /// Tail model evaluated at radius r with the stored amplitude.
    double tail_value(double r) const;
    double tail_deriv(double r) const;
};

GroundState solve_ground_state(const LimitProblem& prob, const ProfileOptions& opts = {});

/// Both sides of the weighted mass/energy identity
///   (1/2) int w^2 = sigma * int (d_1 w)^2   over R^N.
struct SigmaIdentity {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_error = 0.0;
};

SigmaIdentity sigma_identity(const GroundState& gs);

/// Columns: r,w,wp
void write_csv(const GroundState& gs, std::ostream& os);

} // namespace conc::profile
