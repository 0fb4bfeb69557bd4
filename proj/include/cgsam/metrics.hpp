#pragma once

#include <map>
#include <vector>

#include "cgsam/geometry.hpp"
#include "cgsam/graph.hpp"

namespace cgsam {

/// Plain point values (no uncertainty) for every camera and feature; the unit
/// that the re-projection metric and the gauge transform act on.
struct PointEstimate {
    std::map<int, Pose> poses;
    std::map<int, Vec> features;
};

struct ReprojectionStats {
    double mean_error = 0.0;
    int counted = 0;
    int excluded = 0;  // tracks whose projection was depth-degenerate
};

/// Mean Euclidean image distance between projected estimates and the
/// measured projections. Degenerate tracks are excluded and counted.
inline ReprojectionStats reprojection_stats(const PointEstimate& estimate,
                                            const std::vector<Track>& tracks,
                                            const std::vector<Calibration>& calibs,
                                            WorldMode mode) {
    ReprojectionStats stats;
    double total = 0.0;
    for (const auto& t : tracks) {
        const Pose& pose = estimate.poses.at(t.camera);
        const Vec& x = estimate.features.at(t.feature);
        try {
            total += (project(pose, calibs.at(t.camera), x, mode) - t.image).norm();
            ++stats.counted;
        } catch (const DepthDegenerate&) {
            ++stats.excluded;
        }
    }
    stats.mean_error = stats.counted > 0 ? total / stats.counted : 0.0;
    return stats;
}

inline double mean_reprojection_error(const PointEstimate& estimate,
                                      const std::vector<Track>& tracks,
                                      const std::vector<Calibration>& calibs,
                                      WorldMode mode) {
    return reprojection_stats(estimate, tracks, calibs, mode).mean_error;
}

/// Global similarity x -> scale * Q x + t applied to all centres and features,
/// with the compensating rotation R -> R Q^T on every camera. Re-projection
/// error is invariant under this map.
inline PointEstimate apply_similarity(const PointEstimate& estimate, double scale,
                                      const Mat& q, const Vec& t, WorldMode mode) {
    PointEstimate out;
    for (const auto& [j, pose] : estimate.poses) {
        Pose p;
        p.center = scale * q * pose.center + t;
        const Mat r = rotation_from_euler(pose.angles, mode) * q.transpose();
        p.angles = euler_from_rotation(r, mode);
        out.poses[j] = p;
    }
    for (const auto& [i, x] : estimate.features) out.features[i] = scale * q * x + t;
    return out;
}

}  // namespace cgsam
