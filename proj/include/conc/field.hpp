#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "conc/errors.hpp"
#include "conc/grid.hpp"

namespace conc {

/// Scalar field sampled on a tensor grid: ny rows (periodic tangential
/// coordinate) by nx columns (transverse line coordinate), row-major.
struct Field2D {
    Grid1D gy; // periodic: nodes 0..ny-1 cover [0, L), h = L/ny
    Grid1D gx;
    std::vector<double> v;

    Field2D() = default;
    Field2D(const Grid1D& y, const Grid1D& x) : gy(y), gx(x), v(y.n * x.n, 0.0) {}

    std::size_t ny() const { return gy.n; }
    std::size_t nx() const { return gx.n; }
    double& at(std::size_t iy, std::size_t ix) { return v[iy * gx.n + ix]; }
    double at(std::size_t iy, std::size_t ix) const { return v[iy * gx.n + ix]; }

    double* row(std::size_t iy) { return v.data() + iy * gx.n; }
    const double* row(std::size_t iy) const { return v.data() + iy * gx.n; }

    std::vector<double> row_vec(std::size_t iy) const {
        return std::vector<double>(row(iy), row(iy) + gx.n);
    }
    void set_row(std::size_t iy, const std::vector<double>& r) {
        if (r.size() != gx.n) throw GridMismatch("Field2D::set_row: size mismatch");
        std::copy(r.begin(), r.end(), row(iy));
    }

    void require_compatible(const Field2D& o, const char* where) const {
        if (!gy.same(o.gy) || !gx.same(o.gx)) throw GridMismatch(std::string(where) + ": field grids differ");
    }

    Field2D& operator+=(const Field2D& o) {
        require_compatible(o, "Field2D::+=");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Field2D& operator-=(const Field2D& o) {
        require_compatible(o, "Field2D::-=");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    Field2D& operator*=(double s) {
        for (auto& x : v) x *= s;
        return *this;
    }
    /// Pointwise product.
    Field2D& hadamard(const Field2D& o) {
        require_compatible(o, "Field2D::hadamard");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= o.v[i];
        return *this;
    }
    Field2D& axpy(double a, const Field2D& o) {
        require_compatible(o, "Field2D::axpy");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += a * o.v[i];
        return *this;
    }
    /// Multiply row iy by s[iy] (broadcast of a tangential profile).
    Field2D& scale_rows(const std::vector<double>& s) {
        if (s.size() != gy.n) throw GridMismatch("Field2D::scale_rows: size mismatch");
        for (std::size_t iy = 0; iy < gy.n; ++iy)
            for (std::size_t ix = 0; ix < gx.n; ++ix) at(iy, ix) *= s[iy];
        return *this;
    }
    /// Multiply column ix by s[ix] (broadcast of a transverse profile).
    Field2D& scale_cols(const std::vector<double>& s) {
        if (s.size() != gx.n) throw GridMismatch("Field2D::scale_cols: size mismatch");
        for (std::size_t iy = 0; iy < gy.n; ++iy)
            for (std::size_t ix = 0; ix < gx.n; ++ix) at(iy, ix) *= s[ix];
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }

    void fill(const std::function<double(double, double)>& f) {
        for (std::size_t iy = 0; iy < gy.n; ++iy)
            for (std::size_t ix = 0; ix < gx.n; ++ix) at(iy, ix) = f(gy.x(iy), gx.x(ix));
    }
};

inline Field2D operator+(Field2D a, const Field2D& b) { return a += b; }
inline Field2D operator-(Field2D a, const Field2D& b) { return a -= b; }
inline Field2D operator*(double s, Field2D a) { return a *= s; }

/// Broadcast a transverse line profile to every row.
inline Field2D from_line(const Grid1D& gy, const Grid1D& gx, const std::vector<double>& line) {
    if (line.size() != gx.n) throw GridMismatch("from_line: size mismatch");
    Field2D f(gy, gx);
    for (std::size_t iy = 0; iy < gy.n; ++iy) f.set_row(iy, line);
    return f;
}

/// Broadcast a tangential profile to every column.
inline Field2D from_tangent(const Grid1D& gy, const Grid1D& gx, const std::vector<double>& t) {
    if (t.size() != gy.n) throw GridMismatch("from_tangent: size mismatch");
    Field2D f(gy, gx);
    for (std::size_t iy = 0; iy < gy.n; ++iy)
        for (std::size_t ix = 0; ix < gx.n; ++ix) f.at(iy, ix) = t[iy];
    return f;
}

} // namespace conc
