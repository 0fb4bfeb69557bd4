#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cgsam/core.hpp"
#include "cgsam/linalg.hpp"

namespace cgsam {

/// Depth below which a point counts as lying on the principal plane.
inline constexpr double kDepthEps = 1e-9;

/// Camera extrinsics: Euclidean centre plus Euler angles (radians, stored
/// unwrapped). 3 parameters in 2D mode, 6 in 3D mode.
struct Pose {
    Vec center;  // length world_dim
    Vec angles;  // length 1 (2D) or 3 (3D)

    static Pose from_vector(const Vec& v, WorldMode mode) {
        if (v.size() != mode.pose_dim())
            throw ScopeDimMismatch("pose vector has length " + std::to_string(v.size()) +
                                   ", expected " + std::to_string(mode.pose_dim()));
        Pose p;
        p.center = v.head(mode.world_dim());
        p.angles = v.tail(mode.angle_dim());
        return p;
    }

    Vec to_vector() const {
        Vec v(center.size() + angles.size());
        v << center, angles;
        return v;
    }
};

/// Intrinsic calibration: upper-triangular K with positive diagonal
/// (2x2 in 2D mode, 3x3 in 3D mode).
struct Calibration {
    Mat K;

    static Calibration identity(WorldMode mode) {
        return {Mat::Identity(mode.world_dim(), mode.world_dim())};
    }
};

/// Homogeneous camera matrix P = K * R * [I | -C], size D x (D+1).
struct CameraMatrix {
    Mat P;
};

struct FeaturePoint {
    int id = -1;
    Vec position;  // length world_dim
};

/// Euclidean image coordinates of one feature in one camera.
struct Projection {
    int camera = -1;
    int feature = -1;
    Vec image;  // length image_dim
    bool measured = false;
};

/// Rotation from world to camera coordinates. 3D uses the fixed intrinsic
/// Z-Y-X convention R = Rz(tz) * Ry(ty) * Rx(tx).
inline Mat rotation_from_euler(const Vec& angles, WorldMode mode) {
    if (mode.mode() == Mode::TwoD) {
        const double c = std::cos(angles(0)), s = std::sin(angles(0));
        Mat r(2, 2);
        r << c, -s, s, c;
        return r;
    }
    const double cx = std::cos(angles(0)), sx = std::sin(angles(0));
    const double cy = std::cos(angles(1)), sy = std::sin(angles(1));
    const double cz = std::cos(angles(2)), sz = std::sin(angles(2));
    Mat r(3, 3);
    r << cy * cz, cz * sx * sy - cx * sz, sx * sz + cx * cz * sy,
         cy * sz, cx * cz + sx * sy * sz, cx * sy * sz - cz * sx,
         -sy,     cy * sx,                cx * cy;
    return r;
}

/// Inverse of rotation_from_euler; returns principal-range angles. Falls back
/// to tx = 0 at the ty = +-pi/2 singularity.
inline Vec euler_from_rotation(const Mat& r, WorldMode mode) {
    if (mode.mode() == Mode::TwoD) {
        Vec a(1);
        a(0) = std::atan2(r(1, 0), r(0, 0));
        return a;
    }
    Vec a(3);
    const double sy = -r(2, 0);
    a(1) = std::asin(std::clamp(sy, -1.0, 1.0));
    if (std::abs(sy) < 1.0 - 1e-12) {
        a(0) = std::atan2(r(2, 1), r(2, 2));
        a(2) = std::atan2(r(1, 0), r(0, 0));
    } else {
        a(0) = 0.0;
        a(2) = std::atan2(-r(0, 1), r(1, 1));
    }
    return a;
}

inline CameraMatrix camera_matrix(const Pose& pose, const Calibration& calib,
                                  WorldMode mode) {
    const int d = mode.world_dim();
    Mat ext(d, d + 1);
    ext.leftCols(d) = Mat::Identity(d, d);
    ext.col(d) = -pose.center;
    return {calib.K * rotation_from_euler(pose.angles, mode) * ext};
}

/// Euclidean coordinates of a homogeneous image vector.
inline Vec dehomogenize(const Vec& xh) {
    const int d = static_cast<int>(xh.size());
    if (std::abs(xh(d - 1)) < kDepthEps)
        throw DepthDegenerate("projective depth " + std::to_string(xh(d - 1)) +
                              " below " + std::to_string(kDepthEps));
    return xh.head(d - 1) / xh(d - 1);
}

/// The projection function f: builds the camera matrix from the pose, applies
/// it to the homogenized point and dehomogenizes the result.
inline Vec project(const Pose& pose, const Calibration& calib, const Vec& point,
                   WorldMode mode) {
    const int d = mode.world_dim();
    Vec xh(d + 1);
    xh << point, 1.0;
    return dehomogenize(camera_matrix(pose, calib, mode).P * xh);
}

/// One triangulation input: a known camera and the image point it measured.
struct View {
    Pose pose;
    Calibration calib;
    Vec image;
};

/// Homogeneous least-squares (DLT) triangulation. Kept independent of the
/// belief-propagation path so it can serve as a test oracle for it.
inline Vec triangulate(const std::vector<View>& views, WorldMode mode) {
    const int d = mode.world_dim();
    if (views.size() < 2)
        throw DegenerateGeometry("triangulation needs at least two views");

    Mat a(static_cast<int>(views.size()) * (d - 1), d + 1);
    int row = 0;
    for (const auto& v : views) {
        const Mat p = camera_matrix(v.pose, v.calib, mode).P;
        for (int k = 0; k < d - 1; ++k)
            a.row(row++) = v.image(k) * p.row(d - 1) - p.row(k);
    }

    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    // A unique (up to scale) null direction requires the second-smallest
    // singular value to be well away from zero.
    if (sv(d - 1) < 1e-10 * std::max(sv(0), 1e-300))
        throw DegenerateGeometry("triangulation system is rank-deficient");

    const Vec xh = svd.matrixV().col(d);
    if (std::abs(xh(d)) < 1e-12 * xh.head(d).norm())
        throw DegenerateGeometry("triangulated point at infinity");
    return xh.head(d) / xh(d);
}

}  // namespace cgsam
