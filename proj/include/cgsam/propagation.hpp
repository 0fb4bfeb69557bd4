#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cgsam/gaussian.hpp"
#include "cgsam/geometry.hpp"
#include "cgsam/graph.hpp"
#include "cgsam/metrics.hpp"
#include "cgsam/unscented.hpp"

namespace cgsam {

using PriorMap = std::map<VariableId, Moments>;

struct BpConfig {
    double inner_tol = 1e-6;        // max_param_delta threshold on messages
    int max_inner_sweeps = 200;
    int max_outer_iters = 50;
    double outer_tol = 1e-4;        // relative best-error improvement per window
    int patience = 3;
    double inflation = 10.0;        // gamma >= 1, applied on stall
    double stall_threshold = 0.01;  // < 1% relative improvement counts as a stall
    int max_consecutive_inflations = 2;
    double damping = 0.3;           // alpha in [0, 1), on moment parameters
    double sigma_obs = 1e-3;        // default observation noise (tracks may override)
    /// The fitted joint over (projection, pose, feature) is near-singular by
    /// construction — the projection is a deterministic function of the other
    /// two — and collapses entirely once priors get tight. This floors the
    /// image-block variance at (ratio * sigma)^2, a <= ratio^2 observation-
    /// variance inflation that keeps the joint invertible.
    double joint_image_floor = 0.1;
    SigmaScheme scheme = SigmaScheme::Standard;
    double w0 = kDefaultW0;
    bool anchor_gauge = true;
    double anchor_variance = 1e-8;
    double prior_variance_floor = 1e-12;
    uint64_t seed = 0;  // echoed into results; the solver itself is deterministic

    void validate() const {
        if (!(inner_tol > 0) || max_inner_sweeps < 1 || max_outer_iters < 1 ||
            !(outer_tol > 0) || patience < 1)
            throw Error("BpConfig: bounds must be positive");
        if (!(inflation >= 1.0)) throw Error("BpConfig: inflation must be >= 1");
        if (!(damping >= 0.0 && damping < 1.0))
            throw Error("BpConfig: damping must be in [0, 1)");
        if (!(sigma_obs > 0)) throw Error("BpConfig: sigma_obs must be positive");
        if (joint_image_floor < 0) throw Error("BpConfig: joint_image_floor must be >= 0");
        if (scheme == SigmaScheme::Standard && !(w0 > 0.0 && w0 < 1.0))
            throw Error("BpConfig: w0 must be in (0, 1)");
    }
};

struct OuterIterationStat {
    int iteration = 0;
    double error = 0.0;  // mean re-projection error of this iteration's posterior
    int sweeps = 0;
    double final_delta = 0.0;
    bool inflated = false;  // priors of this iteration carried inflated covariances
    int skipped_messages = 0;
};

struct InnerReport {
    int sweeps = 0;
    double final_delta = 0.0;
    int skipped_messages = 0;
    bool converged = false;
};

/// Posterior marginals plus the outer-iteration trace of the solve that
/// produced them.
struct PosteriorEstimate {
    std::map<int, Moments> poses;     // camera id -> (mean, cov)
    std::map<int, Moments> features;  // feature id -> (mean, cov)
    std::vector<OuterIterationStat> trace;
    int best_iteration = -1;
    double error = 0.0;
    /// Max moment delta between the chosen covering cluster's marginal and
    /// the other covering clusters', per variable (calibration diagnostic).
    std::map<VariableId, double> marginal_disagreement;

    PointEstimate point_estimate(WorldMode mode) const {
        PointEstimate pe;
        for (const auto& [j, m] : poses) pe.poses[j] = Pose::from_vector(m.mean, mode);
        for (const auto& [i, m] : features) pe.features[i] = m.mean;
        return pe;
    }
};

using ProgressCallback = std::function<void(const OuterIterationStat&)>;

/// Damping on moment parameters: alpha * old + (1 - alpha) * new. Falls back
/// to the undamped message while either side is improper (e.g. against the
/// initial unit message).
inline GaussianFactor damp_message(const GaussianFactor& old_msg,
                                   const GaussianFactor& new_msg, double alpha) {
    if (alpha <= 0.0) return new_msg;
    if (!old_msg.is_proper() || !new_msg.is_proper()) return new_msg;
    const Moments mo = old_msg.to_moments();
    const Moments mn = new_msg.to_moments();
    return GaussianFactor::from_moments(new_msg.scope(),
                                        alpha * mo.mean + (1.0 - alpha) * mn.mean,
                                        alpha * mo.cov + (1.0 - alpha) * mn.cov);
}

/// Loopy belief propagation over a cluster graph with sigma-point cluster
/// initialization, observation absorption, and the outer
/// re-initialization / covariance-inflation loop.
class Propagator {
public:
    Propagator(ClusterGraph graph, std::vector<Calibration> calibrations, BpConfig config)
        : graph_(std::move(graph)),
          calibs_(std::move(calibrations)),
          cfg_(config),
          mode_(graph_.mode()) {
        cfg_.validate();
        // Directed schedule: both directions of every edge, ordered by
        // (sender cluster id, receiver cluster id).
        for (size_t e = 0; e < graph_.sepsets().size(); ++e) {
            const auto& s = graph_.sepsets()[e];
            schedule_.push_back({s.a, s.b, static_cast<int>(e)});
            schedule_.push_back({s.b, s.a, static_cast<int>(e)});
        }
        std::sort(schedule_.begin(), schedule_.end());
        potentials_.resize(graph_.clusters().size());
        for (const auto& v : graph_.latent_variables())
            degree_[v] = static_cast<int>(graph_.clusters_containing(v).size());
        reset_messages();
        for (const auto& c : graph_.clusters()) {
            tracks_.push_back(c.observation);
            if (c.observation.camera < 0 ||
                c.observation.camera >= static_cast<int>(calibs_.size()))
                throw Error("cluster references camera without calibration");
        }
    }

    const ClusterGraph& graph() const { return graph_; }
    const BpConfig& config() const { return cfg_; }

    /// Message currently stored for sepset `e` in the given direction
    /// (forward = lower cluster id to higher).
    const GaussianFactor& message(int sepset_index, bool forward) const {
        return messages_[sepset_index][forward ? 0 : 1];
    }

    /// Builds every cluster's joint belief over {x, p, X} by pushing the
    /// priors' sigma points through the projection, then absorbs the
    /// cluster's observation as soft evidence. A variable covered by several
    /// clusters would have its prior counted once per cluster in the measure
    /// the graph represents (the product of initial potentials), so each
    /// cluster keeps only a 1/deg fractional power of that prior: the product
    /// over clusters is the prior exactly once, and every potential stays a
    /// proper Gaussian. Messages are reset.
    void init_cluster_beliefs(const PriorMap& priors) {
        for (auto& c : graph_.clusters()) {
            const Moments& prior_x = prior_for(priors, c.feature_var);
            const Moments& prior_p = prior_for(priors, c.pose_var);
            const SigmaPointSet set_x =
                sigma_points(prior_x.mean, prior_x.cov, cfg_.scheme, cfg_.w0);
            const SigmaPointSet set_p =
                sigma_points(prior_p.mean, prior_p.cov, cfg_.scheme, cfg_.w0);
            const Calibration& calib = calibs_[c.observation.camera];
            SigmaPointSet joint;
            try {
                joint = joint_sigma_points(set_x, set_p, [&](const Vec& p, const Vec& x) {
                    return project(Pose::from_vector(p, mode_), calib, x, mode_);
                });
            } catch (const TransformUndefined& e) {
                throw TransformUndefined("cluster " + std::to_string(c.id) + " (camera " +
                                         std::to_string(c.observation.camera) +
                                         ", feature " +
                                         std::to_string(c.observation.feature) +
                                         "): " + e.what());
            }
            Moments jm = joint.moments();
            const double sigma =
                c.observation.sigma > 0.0 ? c.observation.sigma : cfg_.sigma_obs;
            const double floor_sd = cfg_.joint_image_floor * sigma;
            jm.cov.topLeftCorner(mode_.image_dim(), mode_.image_dim()) +=
                floor_sd * floor_sd * Mat::Identity(mode_.image_dim(), mode_.image_dim());
            c.belief = GaussianFactor::from_moments(
                {c.projection_var, c.pose_var, c.feature_var}, jm.mean, jm.cov);
            c.belief = c.belief.observe(c.projection_var, c.observation.image, sigma);
            for (const auto& [v, prior] : {std::pair{c.pose_var, &prior_p},
                                           std::pair{c.feature_var, &prior_x}}) {
                const int deg = degree_.at(v);
                if (deg > 1) {
                    const GaussianFactor q =
                        GaussianFactor::from_moments({v}, prior->mean, prior->cov);
                    c.belief = divide(c.belief, q.power((deg - 1.0) / deg));
                }
            }
            potentials_[c.id] = c.belief;
        }
        reset_messages();
    }

    /// belief = potential * product of incoming messages, from scratch.
    /// Incremental multiply/divide updates drift over hundreds of sweeps;
    /// rebuilding at sweep boundaries keeps beliefs exactly consistent with
    /// the current messages.
    void rebuild_beliefs() {
        for (auto& c : graph_.clusters()) {
            GaussianFactor belief = potentials_[c.id];
            for (int e : graph_.edges_of(c.id)) {
                const bool incoming_forward = graph_.sepsets()[e].b == c.id;
                belief = multiply(belief, messages_[e][incoming_forward ? 0 : 1]);
            }
            c.belief = std::move(belief);
        }
    }

    /// One sum-product message: marginalize the sender's belief onto the
    /// sepset, divide out the reverse message, damp against the previous
    /// message and fold the change into the receiver's belief. A singular
    /// elimination block skips the message (counted, not fatal). Returns the
    /// moment delta against the previous message.
    double pass_message(int sepset_index, bool forward, double damping) {
        const Sepset& s = graph_.sepsets()[sepset_index];
        const int sender = forward ? s.a : s.b;
        const int receiver = forward ? s.b : s.a;
        GaussianFactor& stored = messages_[sepset_index][forward ? 0 : 1];
        const GaussianFactor& reverse = messages_[sepset_index][forward ? 1 : 0];

        GaussianFactor updated;
        try {
            const GaussianFactor marginal =
                graph_.clusters()[sender].belief.marginalize(s.variables);
            updated = damp_message(stored, divide(marginal, reverse), damping);
        } catch (const SingularEliminationBlock&) {
            ++skipped_;
            return 0.0;
        }
        auto& receiver_belief = graph_.clusters()[receiver].belief;
        receiver_belief = multiply(receiver_belief, divide(updated, stored));
        const double delta = max_param_delta(updated, stored);
        stored = std::move(updated);
        return delta;
    }

    /// Round-robin sweeps until the largest message delta drops below
    /// inner_tol. Non-convergence is a reported outcome, not an error.
    InnerReport run_inner_bp() {
        InnerReport report;
        skipped_ = 0;
        if (schedule_.empty()) {
            report.converged = true;
            return report;
        }
        for (int sweep = 1; sweep <= cfg_.max_inner_sweeps; ++sweep) {
            double max_delta = 0.0;
            for (const auto& [sender, receiver, e] : schedule_) {
                const bool forward = sender == graph_.sepsets()[e].a;
                max_delta = std::max(max_delta, pass_message(e, forward, cfg_.damping));
            }
            rebuild_beliefs();
            report.sweeps = sweep;
            report.final_delta = max_delta;
            if (max_delta < cfg_.inner_tol) {
                report.converged = true;
                break;
            }
        }
        report.skipped_messages = skipped_;
        return report;
    }

    /// Per-variable marginals. When several clusters cover a variable the one
    /// with the largest precision trace wins; disagreement with the others is
    /// reported, not resolved.
    PosteriorEstimate extract_posterior() const {
        PosteriorEstimate est;
        for (const auto& v : graph_.latent_variables()) {
            std::optional<GaussianFactor> chosen;
            double best_trace = -std::numeric_limits<double>::infinity();
            std::vector<GaussianFactor> marginals;
            for (int id : graph_.clusters_containing(v)) {
                GaussianFactor m;
                try {
                    m = graph_.clusters()[id].belief.marginalize({v});
                } catch (const SingularEliminationBlock&) {
                    continue;  // this covering cluster is unusable; others may not be
                }
                const double tr = m.precision().trace();
                if (tr > best_trace) {
                    best_trace = tr;
                    chosen = m;
                }
                marginals.push_back(std::move(m));
            }
            if (!chosen)
                throw SingularEliminationBlock("no usable covering cluster for " + v.name());
            double disagreement = 0.0;
            for (const auto& m : marginals)
                disagreement = std::max(disagreement, max_param_delta(*chosen, m));
            est.marginal_disagreement[v] = disagreement;

            Moments moments = chosen->to_moments();  // throws if improper
            if (v.kind == VarKind::Pose)
                est.poses[v.camera] = std::move(moments);
            else
                est.features[v.feature] = std::move(moments);
        }
        return est;
    }

    /// Full solve: repeat { re-initialize sigma points from the current
    /// posterior (inflating covariances on stall), run inner BP, extract }
    /// until the best error stops improving. Returns the best-by-error
    /// posterior with the full trace.
    PosteriorEstimate solve(const PriorMap& priors, const ProgressCallback& cb = {}) {
        PriorMap original = priors;
        floor_covariances(original);
        apply_anchor(original, original);
        PriorMap current = original;

        std::optional<PosteriorEstimate> best;
        double best_error = std::numeric_limits<double>::infinity();
        int best_iteration = -1;
        std::vector<OuterIterationStat> trace;
        std::vector<double> best_so_far;
        double previous_error = std::numeric_limits<double>::quiet_NaN();
        int consecutive_inflations = 0;
        bool inflated_this = false;

        for (int outer = 1; outer <= cfg_.max_outer_iters; ++outer) {
            try {
                init_cluster_beliefs(current);
            } catch (const Error& e) {
                throw Error("outer iteration " + std::to_string(outer) + ": " + e.what());
            }
            const InnerReport inner = run_inner_bp();
            PosteriorEstimate est = extract_posterior();
            const double error = mean_reprojection_error(est.point_estimate(mode_),
                                                         tracks_, calibs_, mode_);

            const OuterIterationStat stat{outer,        error,
                                          inner.sweeps, inner.final_delta,
                                          inflated_this, inner.skipped_messages};
            trace.push_back(stat);
            if (cb) cb(stat);

            if (error < best_error) {
                best_error = error;
                best = est;
                best_iteration = outer;
            }
            best_so_far.push_back(best_error);

            if (error == 0.0) break;
            if (outer > cfg_.patience) {
                const double before = best_so_far[outer - 1 - cfg_.patience];
                const double rel = (before - best_error) /
                                   std::max(before, std::numeric_limits<double>::min());
                if (rel < cfg_.outer_tol) break;
            }

            // Stall detection on consecutive errors; inflation widens the
            // next priors to escape a local minimum, at most twice in a row.
            bool inflate_next = false;
            if (!std::isnan(previous_error)) {
                const double rel =
                    (previous_error - error) /
                    std::max(previous_error, std::numeric_limits<double>::min());
                if (rel < cfg_.stall_threshold) {
                    if (consecutive_inflations < cfg_.max_consecutive_inflations) {
                        inflate_next = true;
                        ++consecutive_inflations;
                    }
                } else {
                    consecutive_inflations = 0;
                }
            }
            previous_error = error;

            current = posterior_as_priors(est);
            if (inflate_next)
                for (auto& [v, m] : current) m.cov *= cfg_.inflation;
            floor_covariances(current);
            apply_anchor(current, original);
            inflated_this = inflate_next;
        }

        best->trace = std::move(trace);
        best->best_iteration = best_iteration;
        best->error = best_error;
        return *best;
    }

private:
    static const Moments& prior_for(const PriorMap& priors, const VariableId& v) {
        const auto it = priors.find(v);
        if (it == priors.end()) throw Error("missing prior for variable " + v.name());
        if (it->second.mean.size() != v.dim)
            throw ScopeDimMismatch("prior dimension mismatch for " + v.name());
        return it->second;
    }

    void reset_messages() {
        messages_.clear();
        for (const auto& s : graph_.sepsets())
            messages_.push_back({GaussianFactor::unit(s.variables),
                                 GaussianFactor::unit(s.variables)});
    }

    void floor_covariances(PriorMap& priors) const {
        for (auto& [v, m] : priors)
            m.cov += cfg_.prior_variance_floor * Mat::Identity(m.cov.rows(), m.cov.cols());
    }

    /// Gauge fixing: the lowest camera id keeps its original prior mean with
    /// covariance anchor_variance * I; in 3D the next camera's centre-x
    /// coordinate is pinned as well, removing the scale freedom.
    void apply_anchor(PriorMap& priors, const PriorMap& original) const {
        if (!cfg_.anchor_gauge) return;
        std::vector<int> cams;
        for (const auto& [v, m] : priors)
            if (v.kind == VarKind::Pose) cams.push_back(v.camera);
        if (cams.empty()) return;
        std::sort(cams.begin(), cams.end());

        const VariableId anchor = VariableId::pose_var(cams.front(), mode_);
        const Moments& anchor_orig = original.at(anchor);
        priors[anchor] = {anchor_orig.mean,
                          cfg_.anchor_variance * Mat::Identity(anchor.dim, anchor.dim)};

        if (mode_.mode() == Mode::ThreeD && cams.size() > 1) {
            const VariableId scale_var = VariableId::pose_var(cams[1], mode_);
            Moments& m = priors[scale_var];
            m.mean(0) = original.at(scale_var).mean(0);
            m.cov.row(0).setZero();
            m.cov.col(0).setZero();
            m.cov(0, 0) = cfg_.anchor_variance;
        }
    }

    PriorMap posterior_as_priors(const PosteriorEstimate& est) const {
        PriorMap out;
        for (const auto& [j, m] : est.poses) out[VariableId::pose_var(j, mode_)] = m;
        for (const auto& [i, m] : est.features)
            out[VariableId::feature_var(i, mode_)] = m;
        return out;
    }

    ClusterGraph graph_;
    std::vector<Calibration> calibs_;
    BpConfig cfg_;
    WorldMode mode_;
    std::vector<Track> tracks_;
    std::vector<std::tuple<int, int, int>> schedule_;  // (sender, receiver, sepset)
    std::vector<std::array<GaussianFactor, 2>> messages_;
    std::vector<GaussianFactor> potentials_;  // post-observation cluster potentials
    std::map<VariableId, int> degree_;        // covering-cluster count per variable
    int skipped_ = 0;
};

/// Convenience wrapper: build the graph from tracks and run the full solve.
inline PosteriorEstimate solve_sam(const std::vector<Track>& tracks,
                                   const std::vector<Calibration>& calibrations,
                                   const PriorMap& priors, WorldMode mode,
                                   const BpConfig& config,
                                   const ProgressCallback& cb = {}) {
    Propagator prop(build_cluster_graph(make_clusters(tracks, mode), mode),
                    calibrations, config);
    return prop.solve(priors, cb);
}

}  // namespace cgsam
