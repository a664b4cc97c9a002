#pragma once

#include <cstdint>

#include "steerlab/linalg.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/tensor.hpp"

namespace steerlab::testutil {

inline Vec random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
    Vec v(d);
    for (double& x : v) x = scale * rng.gaussian();
    return v;
}

inline Vec random_unit(Rng& rng, std::size_t d) {
    for (;;) {
        Vec v = random_vec(rng, d);
        const double n = norm(v);
        if (n > 1e-6) return scaled(v, 1.0 / n);
    }
}

inline Mat random_mat(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Mat m(r, c);
    for (double& x : m.data) x = scale * rng.gaussian();
    return m;
}

/// Orthonormal d x k basis from Gram-Schmidt over random gaussian columns.
inline Mat random_orthonormal(Rng& rng, std::size_t d, std::size_t k) {
    Mat basis(d, k);
    std::size_t filled = 0;
    while (filled < k) {
        Vec v = random_vec(rng, d);
        for (std::size_t j = 0; j < filled; ++j) {
            Vec bj = basis.col(j);
            axpy(-dot(bj, v), bj, v);
        }
        const double n = norm(v);
        if (n < 1e-8) continue;
        basis.set_col(filled++, scaled(v, 1.0 / n));
    }
    return basis;
}

inline Projector random_projector(Rng& rng, std::size_t d, std::size_t k) {
    return Projector::from_basis(random_orthonormal(rng, d, k));
}

/// Chord-based angle between unit vectors: 2 asin(||a-b||/2). Equals the
/// arccos form exactly in real arithmetic but stays well-conditioned near 0,
/// so tests can resolve angles at 1e-9 where arccos cannot.
inline double angle_between(const Vec& a, const Vec& b) {
    const double half_chord = 0.5 * norm(sub(a, b));
    return 2.0 * std::asin(std::min(1.0, half_chord));
}

}  // namespace steerlab::testutil
