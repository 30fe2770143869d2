#pragma once

#include <complex>
#include <vector>

#include "sideband/errors.hpp"
#include "sideband/params.hpp"

namespace sideband::detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform; n must be a power of two.
// Forward convention: X_k = sum_n x_n exp(-i 2 pi k n / N).
inline void fft_radix2(std::vector<complexd>& x, bool inverse = false) {
    const std::size_t n = x.size();
    if (!is_pow2(n))
        throw ValidationError("fft_radix2: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * pi / double(len);
        const complexd wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            complexd w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const complexd u = x[i + k];
                const complexd v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& c : x) c /= double(n);
}

} // namespace sideband::detail
