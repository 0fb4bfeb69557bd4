#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cgsam/geometry.hpp"
#include "cgsam/graph.hpp"
#include "cgsam/metrics.hpp"
#include "cgsam/propagation.hpp"

namespace cgsam {

inline constexpr double kFeatureRadius = 2.0;
inline constexpr double kCameraRadius = 10.0;

struct SceneCamera {
    int id = -1;
    Pose pose;
    Calibration calib;
};

/// Ground-truth (or estimated) cameras, features, and observations — the
/// unit of file I/O and evaluation.
struct Scene {
    WorldMode mode = WorldMode::threed();
    std::vector<SceneCamera> cameras;
    std::vector<FeaturePoint> features;
    std::vector<Track> tracks;
    bool has_ground_truth = true;

    std::vector<Calibration> calibrations() const {
        int max_id = -1;
        for (const auto& c : cameras) max_id = std::max(max_id, c.id);
        std::vector<Calibration> out(max_id + 1, Calibration::identity(mode));
        for (const auto& c : cameras) out[c.id] = c.calib;
        return out;
    }

    PointEstimate truth_estimate() const {
        PointEstimate pe;
        for (const auto& c : cameras) pe.poses[c.id] = c.pose;
        for (const auto& f : features) pe.features[f.id] = f.position;
        return pe;
    }
};

/// Standard deviations for prior perturbation and observation corruption.
/// Angles are in degrees here (converted to radians internally).
struct NoiseSpec {
    double angle_std_deg = 0.0;
    double position_std = 0.0;
    double feature_std = 0.0;
    double pixel_std = 0.0;
    double visibility_drop_prob = 0.0;

    void validate() const {
        if (angle_std_deg < 0 || position_std < 0 || feature_std < 0 || pixel_std < 0)
            throw Error("NoiseSpec: standard deviations must be non-negative");
        if (visibility_drop_prob < 0 || visibility_drop_prob >= 1)
            throw Error("NoiseSpec: visibility_drop_prob must be in [0, 1)");
    }
};

namespace detail {

inline Vec uniform_in_ball(std::mt19937_64& rng, int dim, double radius) {
    std::uniform_real_distribution<double> u(-radius, radius);
    while (true) {
        Vec x(dim);
        for (int k = 0; k < dim; ++k) x(k) = u(rng);
        if (x.norm() <= radius) return x;
    }
}

inline Vec uniform_on_sphere(std::mt19937_64& rng, int dim, double radius) {
    std::normal_distribution<double> n(0.0, 1.0);
    while (true) {
        Vec x(dim);
        for (int k = 0; k < dim; ++k) x(k) = n(rng);
        const double norm = x.norm();
        if (norm > 1e-12) return (radius / norm) * x;
    }
}

/// Orientation that points the camera's viewing axis at the origin.
inline Vec look_at_origin_angles(const Vec& center, WorldMode mode) {
    const Vec dir = -center.normalized();
    if (mode.mode() == Mode::TwoD) {
        // Depth axis of R(t) is (sin t, cos t).
        Vec angles(1);
        angles(0) = std::atan2(dir(0), dir(1));
        return angles;
    }
    Vec up = Vec::Zero(3);
    up(2) = 1.0;
    if (std::abs(dir.dot(up)) > 1.0 - 1e-9) up << 1.0, 0.0, 0.0;
    const Eigen::Vector3d z = dir;
    const Eigen::Vector3d x = Eigen::Vector3d(up).cross(z).normalized();
    const Eigen::Vector3d y = z.cross(x);
    Mat r(3, 3);
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    return euler_from_rotation(r, mode);
}

}  // namespace detail

/// Features uniform in the radius-2 ball, camera centers uniform on the
/// radius-10 sphere facing the origin, identity calibration, exact
/// projections of every feature in every camera.
inline Scene generate_3d(int n_cams, int n_feats, uint64_t seed) {
    if (n_cams < 2 || n_feats < 1) throw Error("generate_3d: need >= 2 cameras, >= 1 feature");
    const WorldMode mode = WorldMode::threed();
    std::mt19937_64 rng(seed);
    Scene scene;
    scene.mode = mode;
    for (int j = 0; j < n_cams; ++j) {
        SceneCamera cam;
        cam.id = j;
        cam.calib = Calibration::identity(mode);
        cam.pose.center = detail::uniform_on_sphere(rng, 3, kCameraRadius);
        cam.pose.angles = detail::look_at_origin_angles(cam.pose.center, mode);
        scene.cameras.push_back(std::move(cam));
    }
    for (int i = 0; i < n_feats; ++i)
        scene.features.push_back({i, detail::uniform_in_ball(rng, 3, kFeatureRadius)});
    for (const auto& cam : scene.cameras)
        for (const auto& f : scene.features)
            scene.tracks.push_back(
                {cam.id, f.id, project(cam.pose, cam.calib, f.position, mode), 0.0});
    return scene;
}

/// 2D analogue: features in the radius-2 disk, cameras on the radius-10
/// circle, 1-D image plane. Each projection is independently dropped with
/// probability drop_prob; the drop pattern is re-drawn (up to 100 times)
/// until every feature keeps >= 2 observations and every camera >= 1.
inline Scene generate_2d(int n_cams, int n_feats, uint64_t seed, double drop_prob = 0.0) {
    if (n_cams < 2 || n_feats < 1) throw Error("generate_2d: need >= 2 cameras, >= 1 feature");
    if (drop_prob < 0 || drop_prob >= 1) throw Error("generate_2d: drop_prob must be in [0, 1)");
    const WorldMode mode = WorldMode::twod();
    std::mt19937_64 rng(seed);
    Scene scene;
    scene.mode = mode;
    for (int j = 0; j < n_cams; ++j) {
        SceneCamera cam;
        cam.id = j;
        cam.calib = Calibration::identity(mode);
        cam.pose.center = detail::uniform_on_sphere(rng, 2, kCameraRadius);
        cam.pose.angles = detail::look_at_origin_angles(cam.pose.center, mode);
        scene.cameras.push_back(std::move(cam));
    }
    for (int i = 0; i < n_feats; ++i)
        scene.features.push_back({i, detail::uniform_in_ball(rng, 2, kFeatureRadius)});

    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::vector<bool>> keep(n_cams, std::vector<bool>(n_feats, true));
        if (drop_prob > 0.0)
            for (int j = 0; j < n_cams; ++j)
                for (int i = 0; i < n_feats; ++i) keep[j][i] = u(rng) >= drop_prob;
        std::vector<int> per_feature(n_feats, 0), per_camera(n_cams, 0);
        for (int j = 0; j < n_cams; ++j)
            for (int i = 0; i < n_feats; ++i)
                if (keep[j][i]) {
                    ++per_feature[i];
                    ++per_camera[j];
                }
        const bool feasible =
            std::all_of(per_feature.begin(), per_feature.end(), [](int k) { return k >= 2; }) &&
            std::all_of(per_camera.begin(), per_camera.end(), [](int k) { return k >= 1; });
        if (!feasible) continue;
        for (const auto& cam : scene.cameras)
            for (const auto& f : scene.features)
                if (keep[cam.id][f.id])
                    scene.tracks.push_back(
                        {cam.id, f.id, project(cam.pose, cam.calib, f.position, mode), 0.0});
        return scene;
    }
    throw InfeasibleVisibility("generate_2d: no feasible visibility pattern in 100 draws");
}

/// Priors from perturbed ground truth: means = truth + Gaussian noise, diagonal
/// covariances equal to the perturbation variances (angle entries in radians),
/// observations untouched. Zero stds give point priors up to the 1e-12 floor
/// applied by the solver.
inline PriorMap perturb_priors(const Scene& scene, const NoiseSpec& noise, uint64_t seed) {
    noise.validate();
    if (!scene.has_ground_truth) throw Error("perturb_priors: scene lacks ground truth");
    const WorldMode mode = scene.mode;
    const double angle_std = noise.angle_std_deg * std::numbers::pi / 180.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    PriorMap priors;
    for (const auto& cam : scene.cameras) {
        Vec mean = cam.pose.to_vector();
        Vec var(mode.pose_dim());
        for (int k = 0; k < mode.world_dim(); ++k) {
            mean(k) += noise.position_std * n(rng);
            var(k) = noise.position_std * noise.position_std;
        }
        for (int k = mode.world_dim(); k < mode.pose_dim(); ++k) {
            mean(k) += angle_std * n(rng);
            var(k) = angle_std * angle_std;
        }
        priors[VariableId::pose_var(cam.id, mode)] = {mean, Mat(var.asDiagonal())};
    }
    for (const auto& f : scene.features) {
        Vec mean = f.position;
        for (int k = 0; k < mode.world_dim(); ++k) mean(k) += noise.feature_std * n(rng);
        priors[VariableId::feature_var(f.id, mode)] = {
            mean, noise.feature_std * noise.feature_std *
                      Mat::Identity(mode.world_dim(), mode.world_dim())};
    }
    return priors;
}

/// Adds N(0, sigma^2 I) to every observation. Track sigma fields are left
/// unchanged; recording the noise model on the tracks is the caller's call.
inline Scene observation_noise(const Scene& scene, double sigma, uint64_t seed) {
    if (sigma < 0) throw Error("observation_noise: sigma must be non-negative");
    Scene out = scene;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& t : out.tracks)
        for (int k = 0; k < t.image.size(); ++k) t.image(k) += n(rng);
    return out;
}

inline PointEstimate prior_point_estimate(const PriorMap& priors, WorldMode mode) {
    PointEstimate pe;
    for (const auto& [v, m] : priors) {
        if (v.kind == VarKind::Pose)
            pe.poses[v.camera] = Pose::from_vector(m.mean, mode);
        else if (v.kind == VarKind::Feature)
            pe.features[v.feature] = m.mean;
    }
    return pe;
}

inline double reprojection_error(const PointEstimate& estimate, const Scene& scene) {
    return mean_reprojection_error(estimate, scene.tracks, scene.calibrations(), scene.mode);
}

inline double reprojection_error(const PosteriorEstimate& estimate, const Scene& scene) {
    return reprojection_error(estimate.point_estimate(scene.mode), scene);
}

inline double reprojection_error(const PriorMap& priors, const Scene& scene) {
    return reprojection_error(prior_point_estimate(priors, scene.mode), scene);
}

}  // namespace cgsam
