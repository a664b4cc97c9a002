#include <gtest/gtest.h>

#include "steerlab/linalg.hpp"
#include "test_helpers.hpp"

using namespace steerlab;

namespace {

Mat from_columns(const std::vector<Vec>& cols) {
    Mat m(cols[0].size(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) m.set_col(j, cols[j]);
    return m;
}

Mat reconstruct(const SvdResult& s) {
    Mat us = s.u;
    for (std::size_t j = 0; j < us.cols; ++j)
        for (std::size_t i = 0; i < us.rows; ++i) us(i, j) *= s.singular_values[j];
    return matmul(us, s.vt);
}

}  // namespace

TEST(ZScore, HandComputedBatch) {
    // columns {[1,3],[3,5]}: per-coordinate population mean/std are
    // mean=[2,4], std=[1,1], so the standardized columns are {[-1,-1],[1,1]}.
    Mat diffs = from_columns({{1, 3}, {3, 5}});
    auto [out, stats] = zscore_batch(diffs);
    EXPECT_DOUBLE_EQ(stats.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(stats.mean[1], 4.0);
    EXPECT_DOUBLE_EQ(stats.std[0], 1.0);
    EXPECT_DOUBLE_EQ(stats.std[1], 1.0);
    EXPECT_DOUBLE_EQ(out(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(out(1, 0), -1.0);
    EXPECT_DOUBLE_EQ(out(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(out(1, 1), 1.0);
}

TEST(ZScore, ZeroVarianceIsCenteredOnly) {
    Mat diffs = from_columns({{5, 5}, {5, 5}});
    auto [out, stats] = zscore_batch(diffs);
    for (double x : out.data) EXPECT_DOUBLE_EQ(x, 0.0);
    EXPECT_GE(stats.std[0], kZScoreFloor);
    EXPECT_GE(stats.std[1], kZScoreFloor);
}

TEST(ZScore, SingleColumnRejected) {
    Mat diffs(3, 1);
    EXPECT_THROW(zscore_batch(diffs), BatchTooSmall);
}

TEST(ZScore, ScaleInvariance) {
    Rng rng(17);
    Mat diffs = testutil::random_mat(rng, 6, 9, 2.0);
    auto [a, sa] = zscore_batch(diffs);
    Mat scaled_in = diffs;
    for (double& x : scaled_in.data) x *= 4.75;
    auto [b, sb] = zscore_batch(scaled_in);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
}

TEST(CompactSvd, DiagonalSpectrum) {
    Mat x(2, 2);
    x(0, 0) = 3.0;
    x(1, 1) = 1.0;
    SvdResult s = compact_svd(x);
    ASSERT_EQ(s.singular_values.size(), 2u);
    EXPECT_NEAR(s.singular_values[0], 3.0, 1e-12);
    EXPECT_NEAR(s.singular_values[1], 1.0, 1e-12);
}

TEST(CompactSvd, IdentitySpectrum) {
    SvdResult s = compact_svd(Mat::identity(3));
    for (double sv : s.singular_values) EXPECT_NEAR(sv, 1.0, 1e-12);
}

TEST(CompactSvd, SeededReconstruction) {
    Rng rng(99);
    Mat x = testutil::random_mat(rng, 8, 5);
    SvdResult s = compact_svd(x);
    Mat back = reconstruct(s);
    double err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double dlt = back.data[i] - x.data[i];
        err += dlt * dlt;
    }
    EXPECT_LT(std::sqrt(err), 1e-10);
}

TEST(CompactSvd, OrthonormalU) {
    Rng rng(3);
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{10, 4}, {4, 10}, {7, 7}}) {
        Mat x = testutil::random_mat(rng, r, c);
        SvdResult s = compact_svd(x);
        for (std::size_t a = 0; a < s.u.cols; ++a) {
            for (std::size_t b = a; b < s.u.cols; ++b) {
                const double want = a == b ? 1.0 : 0.0;
                EXPECT_NEAR(dot(s.u.col(a), s.u.col(b)), want, 1e-10);
            }
        }
        // descending spectrum
        for (std::size_t j = 1; j < s.singular_values.size(); ++j)
            EXPECT_LE(s.singular_values[j], s.singular_values[j - 1]);
    }
}

TEST(CompactSvd, RankDeficientStillOrthonormal) {
    // Two proportional columns: rank 1, second singular value 0.
    Mat x = from_columns({{2, 0, 1}, {4, 0, 2}});
    SvdResult s = compact_svd(x);
    EXPECT_NEAR(s.singular_values[1], 0.0, 1e-12);
    EXPECT_NEAR(dot(s.u.col(0), s.u.col(1)), 0.0, 1e-10);
    EXPECT_NEAR(norm(s.u.col(1)), 1.0, 1e-10);
}

TEST(RankByEnergy, HandComputedExample) {
    // energies 4,1,1: 4/6 < 0.8 and 5/6 >= 0.8, so k = 2.
    EXPECT_EQ(rank_by_energy({2, 1, 1}, 0.8), 2u);
}

TEST(RankByEnergy, SingleValue) {
    EXPECT_EQ(rank_by_energy({1}, 0.1), 1u);
    EXPECT_EQ(rank_by_energy({1}, 1.0), 1u);
}

TEST(RankByEnergy, AllZeroSpectrumRejected) {
    EXPECT_THROW(rank_by_energy({0, 0, 0}, 0.8), AllZeroSpectrum);
}

TEST(RankByEnergy, MatchesBruteForceScan) {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t len = 1 + rng.index(12);
        Vec s(len);
        for (double& x : s) x = rng.uniform(0.0, 4.0);
        std::sort(s.rbegin(), s.rend());
        const double eta = rng.uniform(1e-6, 1.0);
        double total = 0.0;
        for (double x : s) total += x * x;
        if (total == 0.0) continue;
        std::size_t expect = len;
        double acc = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            acc += s[k] * s[k];
            if (acc / total >= eta) {
                expect = k + 1;
                break;
            }
        }
        EXPECT_EQ(rank_by_energy(s, eta), expect);
    }
}

TEST(Projector, SpanE1SplitsCoordinates) {
    Mat basis(2, 1);
    basis(0, 0) = 1.0;
    Projector p = Projector::from_basis(basis);
    Vec h = {2, 3};
    Vec proj = p.project(h);
    Vec rej = p.reject(h);
    EXPECT_DOUBLE_EQ(proj[0], 2.0);
    EXPECT_DOUBLE_EQ(proj[1], 0.0);
    EXPECT_DOUBLE_EQ(rej[0], 0.0);
    EXPECT_DOUBLE_EQ(rej[1], 3.0);
}

TEST(Projector, InSpanVectorHasZeroRejection) {
    Rng rng(21);
    Projector p = testutil::random_projector(rng, 16, 5);
    Vec coeffs = testutil::random_vec(rng, 5);
    Vec h = matvec(p.basis(), coeffs);
    EXPECT_LT(norm(p.reject(h)), 1e-10 * std::max(1.0, norm(h)));
}

TEST(Projector, PythagorasAndExactSplit) {
    Rng rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        Projector p = testutil::random_projector(rng, 24, 7);
        Vec h = testutil::random_vec(rng, 24, 3.0);
        Vec proj = p.project(h);
        Vec rej = p.reject(h);
        Vec sum = add(proj, rej);
        for (std::size_t i = 0; i < h.size(); ++i)
            EXPECT_NEAR(sum[i], h[i], 1e-10);
        EXPECT_NEAR(dot(proj, rej), 0.0, 1e-9 * dot(h, h));
        EXPECT_NEAR(dot(proj, proj) + dot(rej, rej), dot(h, h), 1e-9 * dot(h, h));
    }
}

TEST(Projector, IdempotentAcrossDims) {
    Rng rng(23);
    for (std::size_t d : {4u, 64u, 512u}) {
        Projector p = testutil::random_projector(rng, d, std::max<std::size_t>(1, d / 4));
        const int cases = d == 512 ? 50 : 200;
        for (int i = 0; i < cases; ++i) {
            Vec h = testutil::random_vec(rng, d);
            Vec ph = p.project(h);
            Vec pph = p.project(ph);
            EXPECT_LT(norm(sub(pph, ph)), 1e-8 * std::max(1.0, norm(h)));
        }
    }
}

TEST(Projector, NonOrthonormalBasisRejected) {
    Mat basis(3, 2);
    basis(0, 0) = 1.0;
    basis(0, 1) = 1.0;  // duplicated direction
    EXPECT_THROW(Projector::from_basis(basis), InvalidArgument);
}

TEST(Projector, DimMismatchRejected) {
    Mat basis(3, 1);
    basis(0, 0) = 1.0;
    Projector p = Projector::from_basis(basis);
    EXPECT_THROW(p.project({1, 2}), DimMismatch);
}

TEST(Pca2, PlanarPointsReconstructExactly) {
    Rng rng(31);
    // Points in an affine 2-D plane embedded in 9 dimensions.
    Mat plane = testutil::random_orthonormal(rng, 9, 2);
    Vec offset = testutil::random_vec(rng, 9);
    std::vector<Vec> pts;
    for (int i = 0; i < 40; ++i) {
        Vec c = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        Vec p = offset;
        axpy(c[0], plane.col(0), p);
        axpy(c[1], plane.col(1), p);
        pts.push_back(p);
    }
    Pca2 pca = Pca2::fit(pts);
    // Projection must preserve pairwise distances for rank-2 data.
    for (std::size_t a = 0; a < pts.size(); a += 7) {
        for (std::size_t b = a + 1; b < pts.size(); b += 5) {
            auto [x1, y1] = pca.project(pts[a]);
            auto [x2, y2] = pca.project(pts[b]);
            const double d2 = std::hypot(x1 - x2, y1 - y2);
            const double dfull = norm(sub(pts[a], pts[b]));
            EXPECT_NEAR(d2, dfull, 1e-8);
        }
    }
}
