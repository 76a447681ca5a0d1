#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "conc/errors.hpp"

namespace conc {

/// General banded matrix with kl sub- and ku super-diagonals, stored in
/// LAPACK band layout with kl extra rows of fill-in headroom so it can be
/// factored in place with partial pivoting.
class BandedMatrix {
  public:
    BandedMatrix() = default;
    BandedMatrix(std::size_t n, int kl, int ku)
        : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1), ab_(ldab_ * n, 0.0) {}

    std::size_t size() const { return n_; }
    int kl() const { return kl_; }
    int ku() const { return ku_; }

    /// Reference to A(i, j); (i, j) must lie inside the band.
    double& at(std::size_t i, std::size_t j) {
        return ab_[static_cast<std::size_t>(kl_ + ku_ + static_cast<long>(i) -
                                            static_cast<long>(j)) +
                   ldab_ * j];
    }
    double at(std::size_t i, std::size_t j) const {
        return ab_[static_cast<std::size_t>(kl_ + ku_ + static_cast<long>(i) -
                                            static_cast<long>(j)) +
                   ldab_ * j];
    }

    bool inside(std::size_t i, std::size_t j) const {
        long d = static_cast<long>(i) - static_cast<long>(j);
        return d <= kl_ && -d <= ku_;
    }

    /// y = A x.
    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != n_) throw GridMismatch("BandedMatrix::apply: size mismatch");
        std::vector<double> y(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            // row i holds columns [i-kl, i+ku]
            std::size_t j0 = i >= static_cast<std::size_t>(kl_) ? i - kl_ : 0;
            std::size_t j1 = std::min(n_ - 1, i + static_cast<std::size_t>(ku_));
            double s = 0.0;
            for (std::size_t j = j0; j <= j1; ++j) s += at(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

  private:
    friend class BandedLU;
    std::size_t n_ = 0;
    int kl_ = 0, ku_ = 0;
    std::size_t ldab_ = 0;
    std::vector<double> ab_;
};

/// LU factorization with partial pivoting of a banded matrix.
class BandedLU {
  public:
    BandedLU() = default;
    explicit BandedLU(BandedMatrix a) : a_(std::move(a)), piv_(a_.n_) { factor(); }

    /// Solve A x = b in place.
    void solve(std::vector<double>& b) const {
        const std::size_t n = a_.n_;
        if (b.size() != n) throw GridMismatch("BandedLU::solve: size mismatch");
        const int kl = a_.kl_, ku = a_.ku_;
        // forward elimination with recorded row swaps
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t jp = piv_[j];
            if (jp != j) std::swap(b[j], b[jp]);
            std::size_t ilast = std::min(n - 1, j + static_cast<std::size_t>(kl));
            for (std::size_t i = j + 1; i <= ilast; ++i) b[i] -= mult(i, j) * b[j];
        }
        // back substitution, U has bandwidth kl+ku
        for (std::size_t jj = n; jj-- > 0;) {
            b[jj] /= uval(jj, jj);
            std::size_t i0 = jj >= static_cast<std::size_t>(kl + ku)
                                 ? jj - static_cast<std::size_t>(kl + ku)
                                 : 0;
            for (std::size_t i = i0; i < jj; ++i) b[i] -= uval(i, jj) * b[jj];
        }
    }

    std::vector<double> solved(std::vector<double> b) const {
        solve(b);
        return b;
    }

    double min_pivot() const { return min_pivot_; }

  private:
    double& entry(std::size_t i, std::size_t j) { return a_.at(i, j); }
    double uval(std::size_t i, std::size_t j) const { return a_.at(i, j); }
    double mult(std::size_t i, std::size_t j) const { return a_.at(i, j); }

    void factor() {
        const std::size_t n = a_.n_;
        const int kl = a_.kl_, ku = a_.ku_;
        min_pivot_ = std::numeric_limits<double>::max();
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t ilast = std::min(n - 1, j + static_cast<std::size_t>(kl));
            std::size_t jp = j;
            double amax = std::abs(a_.at(j, j));
            for (std::size_t i = j + 1; i <= ilast; ++i) {
                double v = std::abs(a_.at(i, j));
                if (v > amax) { amax = v; jp = i; }
            }
            piv_[j] = jp;
            if (amax == 0.0) throw DegenerateOperator("BandedLU: exactly singular matrix");
            min_pivot_ = std::min(min_pivot_, amax);
            std::size_t jlast = std::min(n - 1, j + static_cast<std::size_t>(kl + ku));
            if (jp != j)
                for (std::size_t c = j; c <= jlast; ++c) std::swap(a_.at(j, c), a_.at(jp, c));
            for (std::size_t i = j + 1; i <= ilast; ++i) {
                double l = a_.at(i, j) / a_.at(j, j);
                a_.at(i, j) = l;
                for (std::size_t c = j + 1; c <= jlast; ++c) a_.at(i, c) -= l * a_.at(j, c);
            }
        }
    }

    BandedMatrix a_;
    std::vector<std::size_t> piv_;
    double min_pivot_ = 0.0;
};

/// Number of eigenvalues of the symmetric tridiagonal matrix (diag d, offdiag e)
/// that are strictly below sigma, via the standard LDL^T sign count.
inline std::size_t sturm_count_below(const std::vector<double>& d, const std::vector<double>& e,
                                     double sigma) {
    const std::size_t n = d.size();
    if (n == 0 || e.size() + 1 != n) throw GridMismatch("sturm_count_below: size mismatch");
    std::size_t count = 0;
    double t = d[0] - sigma;
    const double tiny = 1e-300;
    if (t < 0) ++count;
    for (std::size_t i = 1; i < n; ++i) {
        double denom = t;
        if (std::abs(denom) < tiny) denom = (denom < 0 ? -tiny : tiny);
        t = d[i] - sigma - e[i - 1] * e[i - 1] / denom;
        if (t < 0) ++count;
    }
    return count;
}

/// k-th (0-based) eigenvalue of a symmetric tridiagonal matrix by bisection.
inline double tridiag_eigenvalue(const std::vector<double>& d, const std::vector<double>& e,
                                 std::size_t k, double tol = 1e-13) {
    double lo = d[0], hi = d[0];
    for (std::size_t i = 0; i < d.size(); ++i) {
        double r = 0;
        if (i > 0) r += std::abs(e[i - 1]);
        if (i + 1 < d.size()) r += std::abs(e[i]);
        lo = std::min(lo, d[i] - r);
        hi = std::max(hi, d[i] + r);
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (sturm_count_below(d, e, mid) <= k)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < tol * std::max(1.0, std::abs(mid))) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace conc
