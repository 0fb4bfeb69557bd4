#pragma once

#include <compare>
#include <string>
#include <tuple>

#include "cgsam/core.hpp"

namespace cgsam {

enum class VarKind : int { Feature = 0, Pose = 1, Projection = 2 };

/// Identity of one random variable in the scene: a feature position X^i, a
/// camera pose p_j, or a projection x_j^i. Ordering (and therefore canonical
/// scope order inside factors) is by (kind, camera, feature); the dimension
/// is payload and must agree wherever two factors share a variable.
struct VariableId {
    VarKind kind = VarKind::Feature;
    int camera = -1;
    int feature = -1;
    int dim = 0;

    static VariableId feature_var(int i, WorldMode mode) {
        return {VarKind::Feature, -1, i, mode.world_dim()};
    }
    static VariableId pose_var(int j, WorldMode mode) {
        return {VarKind::Pose, j, -1, mode.pose_dim()};
    }
    static VariableId projection_var(int j, int i, WorldMode mode) {
        return {VarKind::Projection, j, i, mode.image_dim()};
    }

    std::tuple<int, int, int> key() const {
        return {static_cast<int>(kind), camera, feature};
    }

    friend bool operator==(const VariableId& a, const VariableId& b) {
        return a.key() == b.key();
    }
    friend std::strong_ordering operator<=>(const VariableId& a,
                                            const VariableId& b) {
        return a.key() <=> b.key();
    }

    std::string name() const {
        switch (kind) {
            case VarKind::Feature: return "X" + std::to_string(feature);
            case VarKind::Pose: return "p" + std::to_string(camera);
            case VarKind::Projection:
                return "x" + std::to_string(camera) + "_" + std::to_string(feature);
        }
        return "?";
    }
};

}  // namespace cgsam
