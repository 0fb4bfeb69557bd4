#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "cgsam/core.hpp"
#include "cgsam/linalg.hpp"
#include "cgsam/variable.hpp"

namespace cgsam {

struct Moments {
    Vec mean;
    Mat cov;
};

/// A Gaussian factor over a named variable scope, stored in canonical form:
///
///     phi(x) = exp(-1/2 x' K x + h' x + g)
///
/// Multiplication and division are parameter additions/subtractions on the
/// aligned scope union; marginalization is a Schur complement. Factors used
/// as messages may be improper (K only PSD or indefinite) — that is allowed
/// and only final marginals are required to be proper.
///
/// The scope is always kept in canonical (sorted VariableId) order so that
/// factor alignment is deterministic.
class GaussianFactor {
public:
    GaussianFactor() : K_(0, 0), h_(0), g_(0.0) {}

    /// Unit factor (K = 0, h = 0, g = 0): the identity for multiplication.
    static GaussianFactor unit(std::vector<VariableId> scope) {
        GaussianFactor f;
        f.scope_ = canonicalize(std::move(scope));
        const int d = scope_dim(f.scope_);
        f.K_ = Mat::Zero(d, d);
        f.h_ = Vec::Zero(d);
        f.g_ = 0.0;
        return f;
    }

    /// Canonical parameters given with `scope` in arbitrary order; blocks are
    /// permuted into canonical scope order.
    static GaussianFactor from_canonical(const std::vector<VariableId>& scope,
                                         const Mat& k, const Vec& h, double g) {
        if (h.size() != scope_dim(scope) || k.rows() != h.size() || k.cols() != h.size())
            throw ScopeDimMismatch("canonical parameter size does not match scope");
        auto perm = sort_permutation(scope);
        const std::vector<int> idx = coordinate_permutation(scope, perm);
        GaussianFactor f;
        f.scope_ = apply_permutation(scope, perm);
        check_no_duplicates(f.scope_);
        f.K_ = symmetrized(Mat(k(idx, idx)));
        f.h_ = h(idx);
        f.g_ = g;
        return f;
    }

    static GaussianFactor from_moments(std::vector<VariableId> scope,
                                       const Vec& mean, const Mat& cov) {
        if (mean.size() != scope_dim(scope) || cov.rows() != mean.size() ||
            cov.cols() != mean.size())
            throw ScopeDimMismatch("moment parameter size does not match scope");

        auto perm = sort_permutation(scope);
        std::vector<VariableId> sorted = apply_permutation(scope, perm);
        check_no_duplicates(sorted);
        const std::vector<int> idx = coordinate_permutation(scope, perm);
        const Vec mu = mean(idx);
        const Mat sigma = cov(idx, idx);

        const int d = static_cast<int>(mu.size());
        const auto chol = jittered_llt(sigma);
        GaussianFactor f;
        f.scope_ = std::move(sorted);
        f.K_ = symmetrized(chol.llt.solve(Mat::Identity(d, d)));
        f.h_ = chol.llt.solve(mu);
        // g of a normalized density: -1/2 mu'h - 1/2 (d log 2pi + log det Sigma)
        f.g_ = -0.5 * mu.dot(f.h_) -
               0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_from_llt(chol.llt));
        return f;
    }

    const std::vector<VariableId>& scope() const { return scope_; }
    int dim() const { return static_cast<int>(h_.size()); }
    const Mat& precision() const { return K_; }
    const Vec& info_vec() const { return h_; }
    double log_norm() const { return g_; }

    bool contains(const VariableId& v) const {
        return std::binary_search(scope_.begin(), scope_.end(), v);
    }

    /// Proper means normalizable: K positive definite (no jitter applied).
    bool is_proper() const { return is_positive_definite(K_); }

    /// Moment form (mu, Sigma); requires K positive definite (jitter ladder
    /// applies before giving up).
    Moments to_moments() const {
        const auto chol = jittered_llt(K_);
        Moments m;
        m.mean = chol.llt.solve(h_);
        m.cov = symmetrized(chol.llt.solve(Mat::Identity(dim(), dim())));
        return m;
    }

    /// Marginal onto `keep` (Schur complement on the eliminated block).
    /// Throws SingularEliminationBlock if the eliminated precision block is
    /// not invertible, i.e. some eliminated variable is unconstrained.
    GaussianFactor marginalize(const std::vector<VariableId>& keep) const {
        std::vector<VariableId> kept = canonicalize(keep);
        check_no_duplicates(kept);
        std::vector<int> idx_keep, idx_elim;
        partition_coordinates(kept, idx_keep, idx_elim);
        if (idx_elim.empty()) return *this;

        const Mat kbb = symmetrized(Mat(K_(idx_elim, idx_elim)));
        Eigen::LDLT<Mat> ldlt(kbb);
        // Each pivot is judged against its own variable's initial precision,
        // not the block-wide maximum: precisions of different variables can
        // legitimately sit many decades apart (tight pose priors next to
        // near-flat image evidence), and only a pivot that collapsed relative
        // to its own starting scale signals an unconstrained direction.
        const Vec d = ldlt.vectorD();
        const Vec own = ldlt.transpositionsP() * Vec(kbb.diagonal());
        const bool collapsed =
            (d.cwiseAbs().array() <= 1e-12 * own.cwiseAbs().array()).any();
        if (ldlt.info() != Eigen::Success || !(d.cwiseAbs().maxCoeff() > 0.0) ||
            collapsed)
            throw SingularEliminationBlock(
                "eliminated precision block is singular (unconstrained variable?)");

        const Mat kab = K_(idx_keep, idx_elim);
        const Vec hb = h_(idx_elim);
        const Mat sol = ldlt.solve(kab.transpose());  // Kbb^-1 Kba
        const Vec hbsol = ldlt.solve(hb);

        GaussianFactor out;
        out.scope_ = std::move(kept);
        out.K_ = symmetrized(Mat(K_(idx_keep, idx_keep)) - kab * sol);
        out.h_ = Vec(h_(idx_keep)) - kab * hbsol;
        // log |det Kbb| from the LDLT pivots; for improper factors the g
        // bookkeeping is nominal anyway.
        const double logdet = d.array().abs().log().sum();
        out.g_ = g_ + 0.5 * (idx_elim.size() * std::log(2.0 * std::numbers::pi) -
                             logdet + hb.dot(hbsol));
        return out;
    }

    /// Soft evidence: multiply in the isotropic likelihood N(value, sigma^2 I)
    /// over `var`.
    GaussianFactor observe(const VariableId& var, const Vec& value,
                           double sigma) const {
        if (!contains(var))
            throw Error("observe: variable " + var.name() + " not in scope");
        if (!(sigma > 0.0)) throw Error("observe: sigma must be positive");
        const auto it = std::lower_bound(scope_.begin(), scope_.end(), var);
        if (it->dim != value.size() || it->dim != var.dim)
            throw ScopeDimMismatch("observe: value dimension mismatch for " + var.name());

        const int d = it->dim;
        const double inv_var = 1.0 / (sigma * sigma);
        GaussianFactor like;
        like.scope_ = {*it};
        like.K_ = inv_var * Mat::Identity(d, d);
        like.h_ = inv_var * value;
        like.g_ = -0.5 * inv_var * value.squaredNorm() -
                  0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
        return multiply(*this, like);
    }

    /// phi^t: scales the canonical parameters by t (fractional powers of a
    /// Gaussian are Gaussian).
    GaussianFactor power(double t) const {
        GaussianFactor out = *this;
        out.K_ *= t;
        out.h_ *= t;
        out.g_ *= t;
        return out;
    }

    friend GaussianFactor multiply(const GaussianFactor& a, const GaussianFactor& b) {
        GaussianFactor out = unit(merged_scope(a.scope_, b.scope_));
        scatter_add(out, a, +1.0);
        scatter_add(out, b, +1.0);
        out.g_ = a.g_ + b.g_;
        return out;
    }

    /// Divide b out of a; scope(b) must be contained in scope(a). The result
    /// may be improper.
    friend GaussianFactor divide(const GaussianFactor& a, const GaussianFactor& b) {
        for (const auto& v : b.scope_) {
            const auto it = std::lower_bound(a.scope_.begin(), a.scope_.end(), v);
            if (it == a.scope_.end() || !(*it == v))
                throw ScopeDimMismatch("divide: scope of divisor not contained in dividend");
            if (it->dim != v.dim)
                throw ScopeDimMismatch("divide: dimension mismatch for " + v.name());
        }
        GaussianFactor out = a;
        scatter_add(out, b, -1.0);
        out.g_ = a.g_ - b.g_;
        return out;
    }

private:
    static std::vector<VariableId> canonicalize(std::vector<VariableId> scope) {
        std::sort(scope.begin(), scope.end());
        return scope;
    }

    static void check_no_duplicates(const std::vector<VariableId>& sorted) {
        for (size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i] == sorted[i - 1])
                throw ScopeDimMismatch("duplicate variable " + sorted[i].name() +
                                       " in scope");
    }

    static int scope_dim(const std::vector<VariableId>& scope) {
        int d = 0;
        for (const auto& v : scope) d += v.dim;
        return d;
    }

    static std::vector<size_t> sort_permutation(const std::vector<VariableId>& scope) {
        std::vector<size_t> perm(scope.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::stable_sort(perm.begin(), perm.end(),
                         [&](size_t x, size_t y) { return scope[x] < scope[y]; });
        return perm;
    }

    static std::vector<VariableId> apply_permutation(
        const std::vector<VariableId>& scope, const std::vector<size_t>& perm) {
        std::vector<VariableId> out;
        out.reserve(scope.size());
        for (size_t i : perm) out.push_back(scope[i]);
        return out;
    }

    /// Coordinate indices (into the original layout) listed in canonical order.
    static std::vector<int> coordinate_permutation(
        const std::vector<VariableId>& scope, const std::vector<size_t>& perm) {
        std::vector<int> starts(scope.size());
        int off = 0;
        for (size_t i = 0; i < scope.size(); ++i) {
            starts[i] = off;
            off += scope[i].dim;
        }
        std::vector<int> idx;
        idx.reserve(off);
        for (size_t i : perm)
            for (int k = 0; k < scope[i].dim; ++k) idx.push_back(starts[i] + k);
        return idx;
    }

    int offset_of(const VariableId& v) const {
        int off = 0;
        for (const auto& s : scope_) {
            if (s == v) return off;
            off += s.dim;
        }
        return -1;
    }

    static std::vector<VariableId> merged_scope(const std::vector<VariableId>& a,
                                                const std::vector<VariableId>& b) {
        std::vector<VariableId> out;
        out.reserve(a.size() + b.size());
        size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] < b[j]) {
                out.push_back(a[i++]);
            } else if (b[j] < a[i]) {
                out.push_back(b[j++]);
            } else {
                if (a[i].dim != b[j].dim)
                    throw ScopeDimMismatch("shared variable " + a[i].name() +
                                           " has dims " + std::to_string(a[i].dim) +
                                           " vs " + std::to_string(b[j].dim));
                out.push_back(a[i]);
                ++i;
                ++j;
            }
        }
        out.insert(out.end(), a.begin() + i, a.end());
        out.insert(out.end(), b.begin() + j, b.end());
        return out;
    }

    /// out.K += sign * f.K (and likewise h), aligned by variable.
    static void scatter_add(GaussianFactor& out, const GaussianFactor& f, double sign) {
        int a_off = 0;
        for (const auto& va : f.scope_) {
            const int oa = out.offset_of(va);
            out.h_.segment(oa, va.dim) += sign * f.h_.segment(a_off, va.dim);
            int b_off = 0;
            for (const auto& vb : f.scope_) {
                const int ob = out.offset_of(vb);
                out.K_.block(oa, ob, va.dim, vb.dim) +=
                    sign * f.K_.block(a_off, b_off, va.dim, vb.dim);
                b_off += vb.dim;
            }
            a_off += va.dim;
        }
    }

    /// Coordinate split into kept (canonical order of `kept`) and eliminated.
    void partition_coordinates(const std::vector<VariableId>& kept,
                               std::vector<int>& idx_keep,
                               std::vector<int>& idx_elim) const {
        size_t ki = 0;
        int off = 0;
        for (const auto& v : scope_) {
            const bool keep_this = ki < kept.size() && kept[ki] == v;
            if (keep_this) {
                if (kept[ki].dim != v.dim)
                    throw ScopeDimMismatch("marginalize: dimension mismatch for " +
                                           v.name());
                ++ki;
            }
            for (int k = 0; k < v.dim; ++k)
                (keep_this ? idx_keep : idx_elim).push_back(off + k);
            off += v.dim;
        }
        if (ki != kept.size())
            throw ScopeDimMismatch("marginalize: keep set is not a subset of the scope");
    }

    std::vector<VariableId> scope_;  // canonical (sorted) order
    Mat K_;
    Vec h_;
    double g_;
};

/// Convergence metric: max absolute difference of the two factors' moment
/// parameters. Falls back to canonical parameters when either factor is
/// improper (messages start as unit factors).
inline double max_param_delta(const GaussianFactor& a, const GaussianFactor& b) {
    if (a.scope() != b.scope())
        throw ScopeDimMismatch("max_param_delta: factors have different scopes");
    for (size_t i = 0; i < a.scope().size(); ++i)
        if (a.scope()[i].dim != b.scope()[i].dim)
            throw ScopeDimMismatch("max_param_delta: dimension mismatch");
    if (a.dim() == 0) return 0.0;
    try {
        const Moments ma = a.to_moments();
        const Moments mb = b.to_moments();
        return std::max((ma.mean - mb.mean).cwiseAbs().maxCoeff(),
                        (ma.cov - mb.cov).cwiseAbs().maxCoeff());
    } catch (const NotPositiveDefinite&) {
        return std::max(
            (a.info_vec() - b.info_vec()).cwiseAbs().maxCoeff(),
            (a.precision() - b.precision()).cwiseAbs().maxCoeff());
    }
}

}  // namespace cgsam
