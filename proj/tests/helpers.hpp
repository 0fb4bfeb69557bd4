#pragma once

#include <map>
#include <random>

#include "cgsam/cgsam.hpp"

namespace test_helpers {

using namespace cgsam;

inline Mat random_spd(std::mt19937_64& rng, int d, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = n(rng);
    return symmetrized(scale * (a * a.transpose() / d + 0.3 * Mat::Identity(d, d)));
}

inline Vec random_vec(std::mt19937_64& rng, int d, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = n(rng);
    return v;
}

/// log N(x; mu, cov), the closed-form normal log-density.
inline double normal_log_pdf(const Vec& x, const Vec& mu, const Mat& cov) {
    const Eigen::LLT<Mat> llt(cov);
    const Vec r = x - mu;
    const Vec sol = llt.solve(r);
    double logdet = 0.0;
    for (int i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * (r.dot(sol) + logdet + x.size() * std::log(2.0 * std::numbers::pi));
}

/// Evaluates a canonical factor's log-density at a per-variable assignment.
inline double log_at(const GaussianFactor& f,
                     const std::map<VariableId, Vec>& assignment) {
    Vec x(f.dim());
    int off = 0;
    for (const auto& v : f.scope()) {
        x.segment(off, v.dim) = assignment.at(v);
        off += v.dim;
    }
    return -0.5 * x.dot(f.precision() * x) + f.info_vec().dot(x) + f.log_norm();
}

/// Draws one sample from N(mu, cov).
inline Vec sample_gaussian(std::mt19937_64& rng, const Vec& mu, const Mat& cov) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec z(mu.size());
    for (int i = 0; i < z.size(); ++i) z(i) = n(rng);
    return mu + Mat(Eigen::LLT<Mat>(cov).matrixL()) * z;
}

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace test_helpers
