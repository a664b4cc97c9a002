#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab {

inline constexpr double kZScoreFloor = 1e-8;

/// Per-coordinate batch statistics. std entries are floored at kZScoreFloor.
struct ZScoreStats {
    Vec mean;
    Vec std;
};

/// Standardize each coordinate (row) of a d x n batch to mean 0 and
/// population std 1. Coordinates whose std is at or below the floor are
/// centered only.
inline std::pair<Mat, ZScoreStats> zscore_batch(const Mat& diffs) {
    const std::size_t d = diffs.rows, n = diffs.cols;
    if (n < 2) throw BatchTooSmall("zscore_batch needs at least 2 columns");
    if (!all_finite(diffs)) throw InvalidArgument("zscore_batch: non-finite input");

    ZScoreStats stats;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 0.0);
    Mat out(d, n);
    for (std::size_t i = 0; i < d; ++i) {
        const double* row = diffs.row_ptr(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        const double sigma = std::sqrt(var / static_cast<double>(n));
        stats.mean[i] = mu;
        stats.std[i] = std::max(sigma, kZScoreFloor);
        double* orow = out.row_ptr(i);
        if (sigma > kZScoreFloor) {
            for (std::size_t j = 0; j < n; ++j) orow[j] = (row[j] - mu) / sigma;
        } else {
            for (std::size_t j = 0; j < n; ++j) orow[j] = row[j] - mu;
        }
    }
    return {std::move(out), std::move(stats)};
}

struct SvdResult {
    Mat u;                    // d x r, orthonormal columns
    Vec singular_values;      // length r, descending
    Mat vt;                   // r x n
};

namespace detail {

// Extends the first `filled` rows of `basis_rows` (each a unit vector of
// length m, mutually orthonormal) with deterministic orthonormal complements.
inline void fill_orthonormal_complement(std::vector<Vec>& basis_rows,
                                        std::size_t filled, std::size_t m) {
    std::size_t e = 0;
    while (filled < basis_rows.size()) {
        if (e >= m)
            throw NumericalFailure("cannot complete orthonormal basis");
        Vec cand(m, 0.0);
        cand[e++] = 1.0;
        for (std::size_t k = 0; k < filled; ++k)
            axpy(-dot(basis_rows[k], cand), basis_rows[k], cand);
        const double nrm = norm(cand);
        if (nrm > 0.5) {
            basis_rows[filled++] = scaled(cand, 1.0 / nrm);
        }
    }
}

}  // namespace detail

/// Compact SVD via one-sided Jacobi rotations. Suitable for the desk-scale
/// shapes used here (d <= 1024, n <= 4096).
inline SvdResult compact_svd(const Mat& x) {
    if (x.rows == 0 || x.cols == 0) throw InvalidArgument("compact_svd: empty matrix");
    if (!all_finite(x)) throw InvalidArgument("compact_svd: non-finite input");

    const bool transposed = x.cols > x.rows;
    // Work on the tall orientation; store columns contiguously as rows.
    // a_rows[j] is the j-th column of the (possibly transposed) input.
    const Mat& src = x;
    const std::size_t m = transposed ? x.cols : x.rows;  // long axis
    const std::size_t n = transposed ? x.rows : x.cols;  // short axis
    std::vector<Vec> a(n, Vec(m));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i)
            a[j][i] = transposed ? src(j, i) : src(i, j);

    // v_rows[j] is the j-th column of V (n x n).
    std::vector<Vec> v(n, Vec(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

    const int max_sweeps = 64;
    const double tol = 1e-14;
    bool converged = (n < 2);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                const double* ap = a[p].data();
                const double* aq = a[q].data();
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += ap[i] * ap[i];
                    beta += aq[i] * aq[i];
                    gamma += ap[i] * aq[i];
                }
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0 || std::abs(gamma) <= tol * denom) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* wp = a[p].data();
                double* wq = a[q].data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = wp[i], xq = wq[i];
                    wp[i] = c * xp - s * xq;
                    wq[i] = s * xp + c * xq;
                }
                double* vp = v[p].data();
                double* vq = v[q].data();
                for (std::size_t i = 0; i < n; ++i) {
                    const double xp = vp[i], xq = vq[i];
                    vp[i] = c * xp - s * xq;
                    vq[i] = s * xp + c * xq;
                }
            }
        }
    }
    if (!converged) throw NumericalFailure("one-sided Jacobi SVD did not converge");

    Vec sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = norm(a[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    const double sig_max = sigma.empty() ? 0.0 : sigma[order[0]];
    const double zero_cut = sig_max * 1e-15;

    std::vector<Vec> u(n);
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t o = order[j];
        if (sigma[o] > zero_cut && sigma[o] > 0.0) {
            u[j] = scaled(a[o], 1.0 / sigma[o]);
            ++nonzero;
        }
    }
    detail::fill_orthonormal_complement(u, nonzero, m);

    Vec sig_sorted(n);
    std::vector<Vec> vt_rows(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t o = order[j];
        sig_sorted[j] = (sigma[o] > zero_cut) ? sigma[o] : 0.0;
        vt_rows[j] = v[o];
    }

    // Deterministic sign convention: the largest-magnitude entry of each
    // left singular vector is positive.
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        double best = std::abs(u[j][0]);
        for (std::size_t i = 1; i < m; ++i) {
            const double mag = std::abs(u[j][i]);
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (u[j][arg] < 0.0) {
            for (double& e : u[j]) e = -e;
            for (double& e : vt_rows[j]) e = -e;
        }
    }

    SvdResult res;
    res.singular_values = std::move(sig_sorted);
    if (!transposed) {
        res.u = Mat(m, n);
        for (std::size_t j = 0; j < n; ++j) res.u.set_col(j, u[j]);
        res.vt = Mat(n, n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) res.vt(j, i) = vt_rows[j][i];
    } else {
        // x = (A)^T = V Sigma U^T for the internal factorization A = U Sigma V^T.
        res.u = Mat(n, n);
        for (std::size_t j = 0; j < n; ++j) res.u.set_col(j, vt_rows[j]);
        res.vt = Mat(n, m);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) res.vt(j, i) = u[j][i];
    }
    return res;
}

/// Smallest k with sum_{j<=k} s_j^2 / sum_j s_j^2 >= eta.
inline std::size_t rank_by_energy(const Vec& singular_values, double eta) {
    if (singular_values.empty())
        throw InvalidArgument("rank_by_energy: empty spectrum");
    if (!(eta > 0.0 && eta <= 1.0))
        throw InvalidArgument("rank_by_energy: eta must be in (0, 1]");
    double total = 0.0;
    for (std::size_t i = 0; i < singular_values.size(); ++i) {
        const double s = singular_values[i];
        if (s < 0.0 || (i > 0 && s > singular_values[i - 1]))
            throw InvalidArgument("rank_by_energy: spectrum not descending nonnegative");
        total += s * s;
    }
    if (total == 0.0) throw AllZeroSpectrum("rank_by_energy");
    double acc = 0.0;
    for (std::size_t k = 0; k < singular_values.size(); ++k) {
        acc += singular_values[k] * singular_values[k];
        if (acc / total >= eta) return k + 1;
    }
    return singular_values.size();
}

/// Orthogonal projector P = B B^T represented by its orthonormal basis B.
class Projector {
  public:
    static Projector from_basis(Mat basis) {
        if (basis.rows == 0 || basis.cols == 0)
            throw InvalidArgument("Projector: empty basis");
        if (!all_finite(basis)) throw InvalidArgument("Projector: non-finite basis");
        // basis^T basis must be the identity within 1e-8.
        for (std::size_t a = 0; a < basis.cols; ++a) {
            for (std::size_t b = a; b < basis.cols; ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < basis.rows; ++i)
                    s += basis(i, a) * basis(i, b);
                const double want = (a == b) ? 1.0 : 0.0;
                if (std::abs(s - want) > 1e-8)
                    throw InvalidArgument("Projector: basis not orthonormal");
            }
        }
        return Projector(std::move(basis));
    }

    const Mat& basis() const { return basis_; }
    std::size_t dim() const { return basis_.rows; }
    std::size_t rank() const { return basis_.cols; }

    /// P h
    Vec project(const Vec& h) const {
        if (h.size() != basis_.rows) throw DimMismatch("Projector::project");
        Vec coeffs = matvec_t(basis_, h);
        return matvec(basis_, coeffs);
    }

    /// (I - P) h
    Vec reject(const Vec& h) const { return sub(h, project(h)); }

  private:
    explicit Projector(Mat basis) : basis_(std::move(basis)) {}
    Mat basis_;
};

/// Rank-2 PCA fitted on column vectors; used for the activation plots.
struct Pca2 {
    Vec mean;   // d
    Mat basis;  // d x 2, orthonormal

    static Pca2 fit(const std::vector<Vec>& points) {
        if (points.size() < 2) throw BatchTooSmall("Pca2::fit needs >= 2 points");
        const std::size_t d = points[0].size();
        Pca2 p;
        p.mean.assign(d, 0.0);
        for (const Vec& v : points) {
            if (v.size() != d) throw DimMismatch("Pca2::fit ragged input");
            axpy(1.0, v, p.mean);
        }
        for (double& e : p.mean) e /= static_cast<double>(points.size());
        Mat cov(d, d);
        for (const Vec& v : points) {
            Vec c = sub(v, p.mean);
            for (std::size_t i = 0; i < d; ++i) {
                const double ci = c[i];
                if (ci == 0.0) continue;
                double* row = cov.row_ptr(i);
                for (std::size_t j = 0; j < d; ++j) row[j] += ci * c[j];
            }
        }
        for (double& e : cov.data) e /= static_cast<double>(points.size());
        SvdResult svd = compact_svd(cov);
        p.basis = Mat(d, 2);
        const std::size_t take = std::min<std::size_t>(2, svd.u.cols);
        for (std::size_t j = 0; j < take; ++j) p.basis.set_col(j, svd.u.col(j));
        if (take < 2) {
            // Degenerate covariance: complete with a deterministic complement.
            std::vector<Vec> rows(2);
            rows[0] = p.basis.col(0);
            detail::fill_orthonormal_complement(rows, 1, d);
            p.basis.set_col(1, rows[1]);
        }
        return p;
    }

    std::pair<double, double> project(const Vec& v) const {
        Vec c = sub(v, mean);
        return {dot(c, basis.col(0)), dot(c, basis.col(1))};
    }
};

}  // namespace steerlab
