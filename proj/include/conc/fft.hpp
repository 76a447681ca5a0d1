#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "conc/errors.hpp"

namespace conc {

using cplx = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place radix-2 Cooley-Tukey transform. Forward uses kernel e^{-2pi i jk/n};
/// the inverse includes the 1/n normalization.
inline void fft_inplace(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw GridMismatch("fft_inplace: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                cplx u = a[i + j];
                cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& z : a) z /= static_cast<double>(n);
}

inline std::vector<cplx> fft(const std::vector<double>& f) {
    std::vector<cplx> a(f.begin(), f.end());
    fft_inplace(a, false);
    return a;
}

inline std::vector<double> ifft_real(std::vector<cplx> a) {
    fft_inplace(a, true);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
    return out;
}

/// Signed integer mode index for bin m of an n-point transform.
inline long mode_index(std::size_t m, std::size_t n) {
    return m <= n / 2 ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(n);
}

/// Spectral derivative of a periodic sample on [0, L); order 1 or 2.
/// The Nyquist bin is zeroed for odd orders.
inline std::vector<double> spectral_derivative(const std::vector<double>& f, double L,
                                               int order) {
    const std::size_t n = f.size();
    auto a = fft(f);
    const double pi = 3.14159265358979323846;
    for (std::size_t m = 0; m < n; ++m) {
        double k = 2.0 * pi * static_cast<double>(mode_index(m, n)) / L;
        if (order == 1) {
            a[m] *= cplx(0.0, k);
            if (m == n / 2) a[m] = 0.0;
        } else if (order == 2) {
            a[m] *= -k * k;
        } else {
            throw GridMismatch("spectral_derivative: order must be 1 or 2");
        }
    }
    return ifft_real(std::move(a));
}

} // namespace conc
