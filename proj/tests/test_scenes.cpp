#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"

using namespace cgsam;
using test_helpers::max_abs;

TEST_CASE("3D scenes: features in the ball, cameras on the sphere, exact tracks") {
    const Scene scene = generate_3d(6, 40, 71);
    REQUIRE(scene.mode == WorldMode::threed());
    REQUIRE(scene.cameras.size() == 6);
    REQUIRE(scene.features.size() == 40);
    REQUIRE(scene.tracks.size() == 6 * 40);  // full visibility
    REQUIRE(scene.has_ground_truth);

    for (const auto& f : scene.features)
        REQUIRE(f.position.norm() <= kFeatureRadius + 1e-12);
    for (const auto& cam : scene.cameras) {
        REQUIRE(cam.pose.center.norm() == Catch::Approx(kCameraRadius).margin(1e-9));
        REQUIRE((cam.calib.K == Mat::Identity(3, 3)));
        // look-at: the world origin lands on the principal point
        const Vec at_origin = project(cam.pose, cam.calib, Vec::Zero(3), scene.mode);
        REQUIRE(at_origin.norm() < 1e-9);
    }
    for (const auto& t : scene.tracks) {
        REQUIRE(t.sigma == 0.0);  // exact observations
        const Vec expected = project(scene.cameras[t.camera].pose,
                                     scene.cameras[t.camera].calib,
                                     scene.features[t.feature].position, scene.mode);
        REQUIRE(max_abs(t.image - expected) == 0.0);
    }
    REQUIRE(reprojection_error(scene.truth_estimate(), scene) < 1e-12);
}

TEST_CASE("2D scenes mirror the 3D layout one dimension down") {
    const Scene scene = generate_2d(5, 12, 73);
    REQUIRE(scene.mode == WorldMode::twod());
    REQUIRE(scene.tracks.size() == 5 * 12);  // no dropping by default
    for (const auto& cam : scene.cameras) {
        REQUIRE(cam.pose.center.norm() == Catch::Approx(kCameraRadius).margin(1e-9));
        const Vec at_origin = project(cam.pose, cam.calib, Vec::Zero(2), scene.mode);
        REQUIRE(at_origin.norm() < 1e-9);
    }
    for (const auto& f : scene.features)
        REQUIRE(f.position.norm() <= kFeatureRadius + 1e-12);
    REQUIRE(reprojection_error(scene.truth_estimate(), scene) < 1e-12);
}

TEST_CASE("generation is reproducible from the seed") {
    const Scene a = generate_3d(4, 10, 99);
    const Scene b = generate_3d(4, 10, 99);
    REQUIRE(a.tracks.size() == b.tracks.size());
    for (size_t i = 0; i < a.cameras.size(); ++i) {
        REQUIRE((a.cameras[i].pose.center == b.cameras[i].pose.center));
        REQUIRE((a.cameras[i].pose.angles == b.cameras[i].pose.angles));
    }
    for (size_t i = 0; i < a.tracks.size(); ++i)
        REQUIRE((a.tracks[i].image == b.tracks[i].image));

    const Scene c = generate_3d(4, 10, 100);  // different seed, different world
    REQUIRE(max_abs(a.cameras[0].pose.center - c.cameras[0].pose.center) > 1e-6);
}

TEST_CASE("visibility dropping keeps every feature in two cameras") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const Scene scene = generate_2d(7, 15, seed, 0.3);
        REQUIRE(scene.tracks.size() < 7 * 15);  // some projections dropped

        std::map<int, std::set<int>> cams_of;
        std::set<int> active_cams;
        for (const auto& t : scene.tracks) {
            cams_of[t.feature].insert(t.camera);
            active_cams.insert(t.camera);
        }
        REQUIRE(cams_of.size() == 15);
        for (const auto& [feat, cams] : cams_of) REQUIRE(cams.size() >= 2);
        REQUIRE(active_cams.size() == 7);  // every camera still sees something
        REQUIRE_NOTHROW(make_clusters(scene.tracks, scene.mode));
    }
}

TEST_CASE("hopeless visibility requests are rejected") {
    REQUIRE_THROWS_AS(generate_2d(2, 30, 1, 0.9), InfeasibleVisibility);
    REQUIRE_THROWS_AS(generate_3d(1, 5, 1), Error);
    REQUIRE_THROWS_AS(generate_2d(2, 5, 1, 1.0), Error);
    NoiseSpec bad;
    bad.position_std = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("zero perturbation returns point priors at the truth") {
    const Scene scene = generate_3d(3, 5, 77);
    const PriorMap priors = perturb_priors(scene, NoiseSpec{}, 77);
    REQUIRE(priors.size() == 3 + 5);
    for (const auto& cam : scene.cameras) {
        const Moments& m = priors.at(VariableId::pose_var(cam.id, scene.mode));
        REQUIRE((m.mean == cam.pose.to_vector()));
        REQUIRE(max_abs(m.cov) == 0.0);
    }
    for (const auto& f : scene.features) {
        const Moments& m = priors.at(VariableId::feature_var(f.id, scene.mode));
        REQUIRE((m.mean == f.position));
    }
    REQUIRE(reprojection_error(priors, scene) < 1e-12);
}

TEST_CASE("perturbation magnitudes match the requested standard deviations") {
    const Scene scene = generate_3d(40, 600, 79);
    NoiseSpec noise;
    noise.angle_std_deg = 5.0;
    noise.position_std = 0.5;
    noise.feature_std = 0.25;
    const PriorMap priors = perturb_priors(scene, noise, 79);
    const double angle_std = 5.0 * std::numbers::pi / 180.0;

    double sq_feat = 0.0, sq_pos = 0.0, sq_ang = 0.0;
    for (const auto& f : scene.features) {
        const Moments& m = priors.at(VariableId::feature_var(f.id, scene.mode));
        sq_feat += (m.mean - f.position).squaredNorm();
        // covariance diagonal records the generating variance exactly
        REQUIRE(max_abs(m.cov - noise.feature_std * noise.feature_std *
                                    Mat::Identity(3, 3)) == 0.0);
    }
    for (const auto& cam : scene.cameras) {
        const Moments& m = priors.at(VariableId::pose_var(cam.id, scene.mode));
        const Vec delta = m.mean - cam.pose.to_vector();
        sq_pos += delta.head(3).squaredNorm();
        sq_ang += delta.tail(3).squaredNorm();
        for (int k = 0; k < 3; ++k) {
            REQUIRE(m.cov(k, k) == noise.position_std * noise.position_std);
            REQUIRE(m.cov(3 + k, 3 + k) == Catch::Approx(angle_std * angle_std));
        }
    }
    REQUIRE(std::sqrt(sq_feat / (600 * 3)) ==
            Catch::Approx(noise.feature_std).epsilon(0.07));
    REQUIRE(std::sqrt(sq_pos / (40 * 3)) ==
            Catch::Approx(noise.position_std).epsilon(0.15));
    REQUIRE(std::sqrt(sq_ang / (40 * 3)) == Catch::Approx(angle_std).epsilon(0.15));
}

TEST_CASE("observation noise perturbs images and nothing else") {
    const Scene scene = generate_3d(8, 120, 83);
    const Scene same = observation_noise(scene, 0.0, 83);
    for (size_t i = 0; i < scene.tracks.size(); ++i)
        REQUIRE((same.tracks[i].image == scene.tracks[i].image));

    const double sigma = 0.01;
    const Scene noisy = observation_noise(scene, sigma, 83);
    REQUIRE(noisy.tracks.size() == scene.tracks.size());
    double sq = 0.0;
    int n = 0;
    for (size_t i = 0; i < scene.tracks.size(); ++i) {
        REQUIRE(noisy.tracks[i].sigma == scene.tracks[i].sigma);  // left alone
        sq += (noisy.tracks[i].image - scene.tracks[i].image).squaredNorm();
        n += static_cast<int>(scene.tracks[i].image.size());
    }
    REQUIRE(std::sqrt(sq / n) == Catch::Approx(sigma).epsilon(0.05));
    // ground truth untouched
    REQUIRE((noisy.cameras[0].pose.center == scene.cameras[0].pose.center));
    REQUIRE((noisy.features[0].position == scene.features[0].position));
}

TEST_CASE("re-projection metric averages image-space displacements") {
    const Scene scene = generate_3d(2, 1, 89);
    PointEstimate est = scene.truth_estimate();
    REQUIRE(reprojection_error(est, scene) < 1e-12);

    Vec offset(3);
    offset << 0.1, -0.2, 0.15;
    est.features[0] += offset;
    double expected = 0.0;
    for (const auto& t : scene.tracks)
        expected += (project(scene.cameras[t.camera].pose, scene.cameras[t.camera].calib,
                             scene.features[0].position + offset, scene.mode) -
                     t.image)
                        .norm();
    expected /= scene.tracks.size();
    REQUIRE(reprojection_error(est, scene) == Catch::Approx(expected));
    REQUIRE(expected > 1e-3);  // the offset is actually visible
}

TEST_CASE("degenerate projections are excluded from the metric, not fatal") {
    const Scene scene = generate_3d(2, 1, 91);
    PointEstimate est = scene.truth_estimate();
    // park the feature on camera 0's principal plane: depth becomes ~0
    const Pose& p0 = scene.cameras[0].pose;
    est.features[0] = p0.center;
    const ReprojectionStats stats =
        reprojection_stats(est, scene.tracks, scene.calibrations(), scene.mode);
    REQUIRE(stats.excluded == 1);
    REQUIRE(stats.counted == 1);
}

TEST_CASE("prior error for the benchmark noise level sits in the expected band") {
    double total = 0.0;
    const int seeds = 5;
    for (uint64_t seed = 0; seed < seeds; ++seed) {
        Scene scene = generate_3d(5, 50, 500 + seed);
        scene = observation_noise(scene, 1e-4, seed);
        NoiseSpec noise;
        noise.angle_std_deg = 5.0;
        noise.position_std = 0.5;
        noise.feature_std = 0.5;
        const PriorMap priors = perturb_priors(scene, noise, seed);
        total += reprojection_error(priors, scene);
    }
    const double mean = total / seeds;
    REQUIRE(mean > 0.05);
    REQUIRE(mean < 0.5);
}

TEST_CASE("the axis-aligned look-at fallback stays well defined") {
    Vec center(3);
    center << 0.0, 0.0, 10.0;  // viewing direction collinear with world z
    const Vec angles = cgsam::detail::look_at_origin_angles(center, WorldMode::threed());
    REQUIRE(angles.allFinite());
    Pose pose{center, angles};
    const Vec image = project(pose, Calibration::identity(WorldMode::threed()),
                              Vec::Zero(3), WorldMode::threed());
    REQUIRE(image.norm() < 1e-9);
}
