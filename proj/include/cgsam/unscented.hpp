#pragma once

#include <cmath>
#include <exception>
#include <utility>

#include <Eigen/Dense>

#include "cgsam/core.hpp"
#include "cgsam/gaussian.hpp"
#include "cgsam/linalg.hpp"

namespace cgsam {

/// Symmetric: 2d points mu +- sqrt(d) * l_i, all weights equal.
/// Standard: 2d+1 points with a weighted centre point, 0 < w0 < 1.
/// Product: pairwise concatenation of two sets (used for cluster joints).
enum class SigmaScheme { Symmetric, Standard, Product };

inline constexpr double kDefaultW0 = 1.0 / 3.0;

/// Weighted point set whose sample mean/covariance reproduce the source
/// Gaussian exactly. Weights are kept as constructed (the symmetric scheme's
/// are unnormalized); statistics normalize by the weight sum.
struct SigmaPointSet {
    Mat points;   // dim x count, one column per point
    Vec weights;  // count
    SigmaScheme scheme = SigmaScheme::Symmetric;

    int dim() const { return static_cast<int>(points.rows()); }
    int count() const { return static_cast<int>(points.cols()); }

    Vec mean() const { return points * (weights / weights.sum()); }

    Mat covariance() const {
        const Vec w = weights / weights.sum();
        const Mat centered = points.colwise() - mean();
        return symmetrized(centered * w.asDiagonal() * centered.transpose());
    }

    Moments moments() const { return {mean(), covariance()}; }
};

/// Sigma points of N(mu, cov). The symmetric scheme uses spread k = sqrt(d),
/// the unique choice for which 2d equally weighted points match cov. The
/// matrix square root is the (jitter-laddered) Cholesky factor.
inline SigmaPointSet sigma_points(const Vec& mu, const Mat& cov,
                                  SigmaScheme scheme, double w0 = kDefaultW0) {
    const int d = static_cast<int>(mu.size());
    const Mat l = jittered_llt(cov).llt.matrixL();

    SigmaPointSet set;
    set.scheme = scheme;
    if (scheme == SigmaScheme::Symmetric) {
        const double k = std::sqrt(static_cast<double>(d));
        set.points.resize(d, 2 * d);
        set.weights = Vec::Ones(2 * d);
        for (int i = 0; i < d; ++i) {
            set.points.col(2 * i) = mu + k * l.col(i);
            set.points.col(2 * i + 1) = mu - k * l.col(i);
        }
    } else if (scheme == SigmaScheme::Standard) {
        if (!(w0 > 0.0 && w0 < 1.0))
            throw Error("standard sigma points require 0 < w0 < 1");
        const double spread = std::sqrt(d / (1.0 - w0));
        set.points.resize(d, 2 * d + 1);
        set.weights.resize(2 * d + 1);
        set.points.col(0) = mu;
        set.weights(0) = w0;
        const double wi = (1.0 - w0) / (2.0 * d);
        for (int i = 0; i < d; ++i) {
            set.points.col(1 + 2 * i) = mu + spread * l.col(i);
            set.points.col(2 + 2 * i) = mu - spread * l.col(i);
            set.weights(1 + 2 * i) = wi;
            set.weights(2 + 2 * i) = wi;
        }
        // The weights are normalized by definition; steer one of them by ulps
        // so the floating-point sum is exactly 1 as well. The sum is monotone
        // in each weight, so after a coarse correction a nextafter walk
        // sweeps the rounded sum in sub-ulp steps until it lands on 1. The
        // last weight is tried first (its ulp grid is the finest), the center
        // weight as fallback; a walk that keeps crossing 1 without hitting it
        // cannot express the correction on that slot and moves on.
        for (const int slot : {2 * d, 0}) {
            double& w = set.weights(slot);
            const double coarse = set.weights.sum();
            if (coarse != 1.0) w += 1.0 - coarse;
            bool was_low = false, first = true;
            int flips = 0;
            for (int pass = 0; pass < 4096 && flips < 3; ++pass) {
                const double sum = set.weights.sum();
                if (sum == 1.0) break;
                const bool low = sum < 1.0;
                if (!first && low != was_low) ++flips;
                first = false;
                was_low = low;
                w = std::nextafter(w, low ? 2.0 : 0.0);
            }
            if (set.weights.sum() == 1.0) break;
        }
    } else {
        throw Error("product sets are built by joint_sigma_points");
    }
    return set;
}

/// Push the set through f and refit a Gaussian to the transformed points.
/// Exact for linear f; matches moments to third order for any nonlinearity.
template <class F>
Moments unscented_transform(const SigmaPointSet& set, F&& f) {
    Mat transformed;
    for (int i = 0; i < set.count(); ++i) {
        Vec t;
        try {
            t = f(Vec(set.points.col(i)));
        } catch (const std::exception& e) {
            throw TransformUndefined("function undefined at sigma point " +
                                     std::to_string(i) + ": " + e.what());
        }
        if (i == 0) transformed.resize(t.size(), set.count());
        transformed.col(i) = t;
    }
    SigmaPointSet out{std::move(transformed), set.weights, SigmaScheme::Product};
    return out.moments();
}

/// Joint sigma points over (x, p, X) from independent sets over X and p:
/// one output point [f(s_p, s_X); s_p; s_X] per pair, with product weights.
/// The marginal statistics over the p and X blocks equal the inputs' exactly.
template <class F>
SigmaPointSet joint_sigma_points(const SigmaPointSet& feature_set,
                                 const SigmaPointSet& pose_set, F&& f) {
    const int dx_feature = feature_set.dim();
    const int dp = pose_set.dim();
    const int n = feature_set.count() * pose_set.count();

    SigmaPointSet joint;
    joint.scheme = SigmaScheme::Product;
    joint.weights.resize(n);
    int col = 0;
    int image_dim = -1;
    for (int b = 0; b < feature_set.count(); ++b) {
        for (int a = 0; a < pose_set.count(); ++a) {
            const Vec sp = pose_set.points.col(a);
            const Vec sx = feature_set.points.col(b);
            Vec image;
            try {
                image = f(sp, sx);
            } catch (const std::exception& e) {
                throw TransformUndefined("projection undefined at sigma point pair (" +
                                         std::to_string(a) + ", " + std::to_string(b) +
                                         "): " + e.what());
            }
            if (image_dim < 0) {
                image_dim = static_cast<int>(image.size());
                joint.points.resize(image_dim + dp + dx_feature, n);
            }
            joint.points.col(col) << image, sp, sx;
            joint.weights(col) = pose_set.weights(a) * feature_set.weights(b);
            ++col;
        }
    }
    return joint;
}

}  // namespace cgsam
