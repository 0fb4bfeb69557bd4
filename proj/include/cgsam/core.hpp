#pragma once

#include <stdexcept>
#include <string>

namespace cgsam {

/// World dimensionality. The 2D mode is a first-class lowered version of the
/// 3D problem: planar world, 1-D image line, pose = (Cx, Cy, theta).
enum class Mode { TwoD, ThreeD };

class WorldMode {
public:
    constexpr explicit WorldMode(Mode m) : mode_(m) {}
    static constexpr WorldMode twod() { return WorldMode(Mode::TwoD); }
    static constexpr WorldMode threed() { return WorldMode(Mode::ThreeD); }

    constexpr Mode mode() const { return mode_; }
    constexpr int world_dim() const { return mode_ == Mode::TwoD ? 2 : 3; }
    constexpr int image_dim() const { return world_dim() - 1; }
    constexpr int angle_dim() const { return mode_ == Mode::TwoD ? 1 : 3; }
    constexpr int pose_dim() const { return world_dim() + angle_dim(); }

    friend constexpr bool operator==(const WorldMode&, const WorldMode&) = default;

private:
    Mode mode_;
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cholesky failed even after the jitter ladder.
struct NotPositiveDefinite : Error {
    using Error::Error;
};

/// Two factors disagree about the dimension of a shared variable, or a scope
/// request is malformed (duplicates, non-subset).
struct ScopeDimMismatch : Error {
    using Error::Error;
};

/// The precision block being integrated out is singular, i.e. a variable is
/// unconstrained along some direction.
struct SingularEliminationBlock : Error {
    using Error::Error;
};

/// The point lies on the camera's principal plane (projective depth ~ 0).
struct DepthDegenerate : Error {
    using Error::Error;
};

/// Triangulation system is rank-deficient (no parallax / collinear setup).
struct DegenerateGeometry : Error {
    using Error::Error;
};

/// A sigma-point transform hit an undefined point of the mapped function.
struct TransformUndefined : Error {
    using Error::Error;
};

/// Feature observed by fewer than two cameras; its position is unrecoverable.
struct UnderconstrainedFeature : Error {
    explicit UnderconstrainedFeature(int feature_id)
        : Error("feature " + std::to_string(feature_id) +
                " is observed by fewer than two cameras"),
          feature(feature_id) {}
    int feature;
};

/// Random visibility dropping could not keep every feature twice-observed.
struct InfeasibleVisibility : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

}  // namespace cgsam
