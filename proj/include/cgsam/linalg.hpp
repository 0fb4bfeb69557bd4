#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "cgsam/core.hpp"

namespace cgsam {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Jitter ladder applied when a Cholesky factorization fails: escalating
/// multiples of the mean diagonal magnitude are added before giving up.
/// Sigma-point joints are routinely rank-deficient, so this is load-bearing.
inline constexpr std::array<double, 3> kJitterLadder = {1e-10, 1e-8, 1e-6};

struct JitteredLlt {
    Eigen::LLT<Mat> llt;
    double jitter = 0.0;  // absolute value added to the diagonal, 0 if none
};

/// Cholesky of a symmetric (semi-)definite matrix with the jitter ladder.
/// Throws NotPositiveDefinite if the largest jitter still fails.
inline JitteredLlt jittered_llt(const Mat& m) {
    const Mat sym = symmetrized(m);
    Eigen::LLT<Mat> llt(sym);
    if (llt.info() == Eigen::Success) return {llt, 0.0};

    double scale = sym.diagonal().cwiseAbs().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    for (double eps : kJitterLadder) {
        const double jitter = eps * scale;
        llt.compute(sym + jitter * Mat::Identity(sym.rows(), sym.cols()));
        if (llt.info() == Eigen::Success) return {llt, jitter};
    }
    throw NotPositiveDefinite("matrix not positive definite after max jitter " +
                              std::to_string(kJitterLadder.back() * scale));
}

inline double log_det_from_llt(const Eigen::LLT<Mat>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// True iff the symmetrized matrix admits a plain (un-jittered) Cholesky.
inline bool is_positive_definite(const Mat& m) {
    if (m.rows() == 0) return true;
    Eigen::LLT<Mat> llt(symmetrized(m));
    return llt.info() == Eigen::Success;
}

}  // namespace cgsam
