#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgsam/propagation.hpp"
#include "cgsam/scenes.hpp"

namespace cgsam {

inline constexpr const char* kSceneFormat = "cgsam-scene";
inline constexpr const char* kResultFormat = "cgsam-result";
inline constexpr int kFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline double to_degrees(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

inline json vec_to_json(const Vec& v) {
    json a = json::array();
    for (int k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

inline Vec vec_from_json(const json& a, const char* what) {
    if (!a.is_array()) throw ParseError(std::string(what) + ": expected an array");
    Vec v(a.size());
    for (size_t k = 0; k < a.size(); ++k) {
        if (!a[k].is_number()) throw ParseError(std::string(what) + ": expected numbers");
        v(static_cast<int>(k)) = a[k].get<double>();
    }
    return v;
}

inline const json& field(const json& j, const char* key, const char* ctx) {
    const auto it = j.find(key);
    if (it == j.end())
        throw ParseError(std::string(ctx) + ": missing field '" + key + "'");
    return *it;
}

inline WorldMode mode_from_string(const std::string& s) {
    if (s == "2d") return WorldMode::twod();
    if (s == "3d") return WorldMode::threed();
    throw ParseError("mode must be '2d' or '3d', got '" + s + "'");
}

inline std::string mode_to_string(WorldMode mode) {
    return mode.mode() == Mode::TwoD ? "2d" : "3d";
}

/// Angle entries of pose-variable vectors are degrees in files, radians
/// in memory; `power` is 1 for means, 2 for variance diagonals.
inline Vec pose_vec_to_file(const Vec& v, WorldMode mode, int power) {
    Vec out = v;
    const double f = std::pow(180.0 / std::numbers::pi, power);
    for (int k = mode.world_dim(); k < mode.pose_dim(); ++k) out(k) *= f;
    return out;
}

inline Vec pose_vec_from_file(const Vec& v, WorldMode mode, int power) {
    Vec out = v;
    const double f = std::pow(std::numbers::pi / 180.0, power);
    for (int k = mode.world_dim(); k < mode.pose_dim(); ++k) out(k) *= f;
    return out;
}

}  // namespace detail

/// "p3" -> camera-3 pose variable, "X7" -> feature-7 position variable.
inline VariableId parse_variable(const std::string& s, WorldMode mode) {
    try {
        if (s.size() >= 2 && s[0] == 'p')
            return VariableId::pose_var(std::stoi(s.substr(1)), mode);
        if (s.size() >= 2 && s[0] == 'X')
            return VariableId::feature_var(std::stoi(s.substr(1)), mode);
    } catch (const std::exception&) {
    }
    throw ParseError("unrecognized variable name '" + s + "'");
}

inline nlohmann::json scene_to_json(const Scene& scene, const PriorMap* priors = nullptr) {
    using nlohmann::json;
    const WorldMode mode = scene.mode;
    json j;
    j["format"] = kSceneFormat;
    j["version"] = kFormatVersion;
    j["mode"] = detail::mode_to_string(mode);
    j["has_ground_truth"] = scene.has_ground_truth;
    json cams = json::array();
    for (const auto& c : scene.cameras) {
        json jc;
        jc["id"] = c.id;
        json k = json::array();  // row-major
        for (int r = 0; r < c.calib.K.rows(); ++r)
            for (int col = 0; col < c.calib.K.cols(); ++col) k.push_back(c.calib.K(r, col));
        jc["K"] = std::move(k);
        if (scene.has_ground_truth) {
            json pose;
            pose["center"] = detail::vec_to_json(c.pose.center);
            Vec deg = c.pose.angles;
            for (int a = 0; a < deg.size(); ++a) deg(a) = detail::to_degrees(deg(a));
            pose["angles_deg"] = detail::vec_to_json(deg);
            jc["pose"] = std::move(pose);
        }
        cams.push_back(std::move(jc));
    }
    j["cameras"] = std::move(cams);
    if (scene.has_ground_truth) {
        json feats = json::array();
        for (const auto& f : scene.features) {
            json jf;
            jf["id"] = f.id;
            jf["xyz"] = detail::vec_to_json(f.position);
            feats.push_back(std::move(jf));
        }
        j["features"] = std::move(feats);
    }
    json tracks = json::array();
    for (const auto& t : scene.tracks) {
        json jt;
        jt["cam"] = t.camera;
        jt["feat"] = t.feature;
        jt["uv"] = detail::vec_to_json(t.image);
        jt["sigma"] = t.sigma;
        tracks.push_back(std::move(jt));
    }
    j["tracks"] = std::move(tracks);
    if (priors) {
        json jp = json::array();
        for (const auto& [v, m] : *priors) {
            json e;
            e["var"] = v.name();
            const int power_mean = 1, power_var = 2;
            const bool is_pose = v.kind == VarKind::Pose;
            const Vec mean =
                is_pose ? detail::pose_vec_to_file(m.mean, mode, power_mean) : m.mean;
            Vec diag = m.cov.diagonal();
            if (is_pose) diag = detail::pose_vec_to_file(diag, mode, power_var);
            e["mean"] = detail::vec_to_json(mean);
            e["cov_diag"] = detail::vec_to_json(diag);
            jp.push_back(std::move(e));
        }
        j["priors"] = std::move(jp);
    }
    return j;
}

inline Scene scene_from_json(const nlohmann::json& j, PriorMap* priors_out = nullptr) {
    using detail::field;
    if (!j.is_object()) throw ParseError("scene: expected a JSON object");
    if (field(j, "format", "scene") != kSceneFormat)
        throw ParseError("scene: not a " + std::string(kSceneFormat) + " document");
    if (field(j, "version", "scene").get<int>() != kFormatVersion)
        throw ParseError("scene: unsupported format version");
    Scene scene;
    scene.mode = detail::mode_from_string(field(j, "mode", "scene").get<std::string>());
    const WorldMode mode = scene.mode;
    scene.has_ground_truth = j.value("has_ground_truth", false);

    std::set<int> cam_ids, feat_ids;
    for (const auto& jc : field(j, "cameras", "scene")) {
        SceneCamera c;
        c.id = field(jc, "id", "camera").get<int>();
        if (!cam_ids.insert(c.id).second)
            throw ParseError("duplicate camera id " + std::to_string(c.id));
        const Vec k = detail::vec_from_json(field(jc, "K", "camera"), "camera K");
        const int d = mode.image_dim() + 1;
        if (k.size() != d * d) throw ParseError("camera K: wrong element count");
        c.calib.K = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                    Eigen::RowMajor>>(k.data(), d, d);
        if (jc.contains("pose")) {
            const auto& jp = jc["pose"];
            c.pose.center = detail::vec_from_json(field(jp, "center", "pose"), "pose center");
            Vec deg = detail::vec_from_json(field(jp, "angles_deg", "pose"), "pose angles");
            for (int a = 0; a < deg.size(); ++a) deg(a) = detail::to_radians(deg(a));
            c.pose.angles = std::move(deg);
            if (c.pose.center.size() != mode.world_dim() ||
                c.pose.angles.size() != mode.angle_dim())
                throw ParseError("pose dimensions do not match mode");
        }
        scene.cameras.push_back(std::move(c));
    }
    if (j.contains("features")) {
        for (const auto& jf : j["features"]) {
            FeaturePoint f;
            f.id = field(jf, "id", "feature").get<int>();
            if (!feat_ids.insert(f.id).second)
                throw ParseError("duplicate feature id " + std::to_string(f.id));
            f.position = detail::vec_from_json(field(jf, "xyz", "feature"), "feature xyz");
            if (f.position.size() != mode.world_dim())
                throw ParseError("feature dimension does not match mode");
            scene.features.push_back(std::move(f));
        }
    }
    for (const auto& jt : field(j, "tracks", "scene")) {
        Track t;
        t.camera = field(jt, "cam", "track").get<int>();
        t.feature = field(jt, "feat", "track").get<int>();
        t.image = detail::vec_from_json(field(jt, "uv", "track"), "track uv");
        t.sigma = jt.value("sigma", 0.0);
        if (!cam_ids.count(t.camera))
            throw ParseError("track references unknown camera " + std::to_string(t.camera));
        if (!feat_ids.empty() && !feat_ids.count(t.feature))
            throw ParseError("track references unknown feature " + std::to_string(t.feature));
        if (t.image.size() != mode.image_dim())
            throw ParseError("track image dimension does not match mode");
        scene.tracks.push_back(std::move(t));
    }
    if (priors_out && j.contains("priors")) {
        for (const auto& je : j["priors"]) {
            const VariableId v =
                parse_variable(field(je, "var", "prior").get<std::string>(), mode);
            Vec mean = detail::vec_from_json(field(je, "mean", "prior"), "prior mean");
            Vec diag = detail::vec_from_json(field(je, "cov_diag", "prior"), "prior cov");
            if (mean.size() != v.dim || diag.size() != v.dim)
                throw ParseError("prior dimensions do not match variable " + v.name());
            if (v.kind == VarKind::Pose) {
                mean = detail::pose_vec_from_file(mean, mode, 1);
                diag = detail::pose_vec_from_file(diag, mode, 2);
            }
            (*priors_out)[v] = {std::move(mean), Mat(diag.asDiagonal())};
        }
    }
    return scene;
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_scene(const std::string& path, const Scene& scene,
                       const PriorMap* priors = nullptr) {
    save_json(path, scene_to_json(scene, priors));
}

inline Scene load_scene(const std::string& path, PriorMap* priors_out = nullptr) {
    return scene_from_json(load_json(path), priors_out);
}

inline nlohmann::json config_to_json(const BpConfig& c) {
    nlohmann::json j;
    j["inner_tol"] = c.inner_tol;
    j["max_inner_sweeps"] = c.max_inner_sweeps;
    j["max_outer_iters"] = c.max_outer_iters;
    j["outer_tol"] = c.outer_tol;
    j["patience"] = c.patience;
    j["inflation"] = c.inflation;
    j["stall_threshold"] = c.stall_threshold;
    j["max_consecutive_inflations"] = c.max_consecutive_inflations;
    j["damping"] = c.damping;
    j["sigma_obs"] = c.sigma_obs;
    j["scheme"] = c.scheme == SigmaScheme::Symmetric ? "symmetric" : "standard";
    j["w0"] = c.w0;
    j["anchor_gauge"] = c.anchor_gauge;
    j["anchor_variance"] = c.anchor_variance;
    j["prior_variance_floor"] = c.prior_variance_floor;
    j["seed"] = c.seed;
    return j;
}

inline BpConfig config_from_json(const nlohmann::json& j) {
    BpConfig c;
    c.inner_tol = j.value("inner_tol", c.inner_tol);
    c.max_inner_sweeps = j.value("max_inner_sweeps", c.max_inner_sweeps);
    c.max_outer_iters = j.value("max_outer_iters", c.max_outer_iters);
    c.outer_tol = j.value("outer_tol", c.outer_tol);
    c.patience = j.value("patience", c.patience);
    c.inflation = j.value("inflation", c.inflation);
    c.stall_threshold = j.value("stall_threshold", c.stall_threshold);
    c.max_consecutive_inflations =
        j.value("max_consecutive_inflations", c.max_consecutive_inflations);
    c.damping = j.value("damping", c.damping);
    c.sigma_obs = j.value("sigma_obs", c.sigma_obs);
    const std::string scheme = j.value("scheme", std::string("standard"));
    if (scheme == "symmetric")
        c.scheme = SigmaScheme::Symmetric;
    else if (scheme == "standard")
        c.scheme = SigmaScheme::Standard;
    else
        throw ParseError("config scheme must be 'symmetric' or 'standard'");
    c.w0 = j.value("w0", c.w0);
    c.anchor_gauge = j.value("anchor_gauge", c.anchor_gauge);
    c.anchor_variance = j.value("anchor_variance", c.anchor_variance);
    c.prior_variance_floor = j.value("prior_variance_floor", c.prior_variance_floor);
    c.seed = j.value("seed", c.seed);
    return c;
}

struct ResultData {
    WorldMode mode = WorldMode::threed();
    uint64_t seed = 0;
    BpConfig config;
    PosteriorEstimate estimate;
};

inline nlohmann::json result_to_json(const ResultData& r) {
    using nlohmann::json;
    json j;
    j["format"] = kResultFormat;
    j["version"] = kFormatVersion;
    j["mode"] = detail::mode_to_string(r.mode);
    j["seed"] = r.seed;
    j["config"] = config_to_json(r.config);
    j["error"] = r.estimate.error;
    j["best_iteration"] = r.estimate.best_iteration;
    json trace = json::array();
    for (const auto& s : r.estimate.trace) {
        json js;
        js["iteration"] = s.iteration;
        js["error"] = s.error;
        js["sweeps"] = s.sweeps;
        js["final_delta"] = s.final_delta;
        js["inflated"] = s.inflated;
        js["skipped_messages"] = s.skipped_messages;
        trace.push_back(std::move(js));
    }
    j["trace"] = std::move(trace);
    json post = json::array();
    auto emit = [&](const VariableId& v, const Moments& m) {
        json e;
        e["var"] = v.name();
        const bool is_pose = v.kind == VarKind::Pose;
        Vec mean = is_pose ? detail::pose_vec_to_file(m.mean, r.mode, 1) : m.mean;
        Vec diag = m.cov.diagonal();
        if (is_pose) diag = detail::pose_vec_to_file(diag, r.mode, 2);
        e["mean"] = detail::vec_to_json(mean);
        e["cov_diag"] = detail::vec_to_json(diag);
        post.push_back(std::move(e));
    };
    for (const auto& [i, m] : r.estimate.features)
        emit(VariableId::feature_var(i, r.mode), m);
    for (const auto& [jcam, m] : r.estimate.poses)
        emit(VariableId::pose_var(jcam, r.mode), m);
    j["posterior"] = std::move(post);
    return j;
}

inline ResultData result_from_json(const nlohmann::json& j) {
    using detail::field;
    if (!j.is_object()) throw ParseError("result: expected a JSON object");
    if (field(j, "format", "result") != kResultFormat)
        throw ParseError("result: not a " + std::string(kResultFormat) + " document");
    if (field(j, "version", "result").get<int>() != kFormatVersion)
        throw ParseError("result: unsupported format version");
    ResultData r;
    r.mode = detail::mode_from_string(field(j, "mode", "result").get<std::string>());
    r.seed = j.value("seed", uint64_t{0});
    if (j.contains("config")) r.config = config_from_json(j["config"]);
    r.estimate.error = j.value("error", 0.0);
    r.estimate.best_iteration = j.value("best_iteration", -1);
    if (j.contains("trace")) {
        for (const auto& js : j["trace"]) {
            OuterIterationStat s;
            s.iteration = js.value("iteration", 0);
            s.error = js.value("error", 0.0);
            s.sweeps = js.value("sweeps", 0);
            s.final_delta = js.value("final_delta", 0.0);
            s.inflated = js.value("inflated", false);
            s.skipped_messages = js.value("skipped_messages", 0);
            r.estimate.trace.push_back(s);
        }
    }
    for (const auto& je : field(j, "posterior", "result")) {
        const VariableId v =
            parse_variable(field(je, "var", "posterior").get<std::string>(), r.mode);
        Vec mean = detail::vec_from_json(field(je, "mean", "posterior"), "posterior mean");
        Vec diag =
            detail::vec_from_json(field(je, "cov_diag", "posterior"), "posterior cov");
        if (mean.size() != v.dim || diag.size() != v.dim)
            throw ParseError("posterior dimensions do not match variable " + v.name());
        if (v.kind == VarKind::Pose) {
            mean = detail::pose_vec_from_file(mean, r.mode, 1);
            diag = detail::pose_vec_from_file(diag, r.mode, 2);
        }
        Moments m{std::move(mean), Mat(diag.asDiagonal())};
        if (v.kind == VarKind::Pose)
            r.estimate.poses[v.camera] = std::move(m);
        else
            r.estimate.features[v.feature] = std::move(m);
    }
    return r;
}

inline void save_result(const std::string& path, const ResultData& r) {
    save_json(path, result_to_json(r));
}

inline ResultData load_result(const std::string& path) {
    return result_from_json(load_json(path));
}

/// One CSV row; cells are written verbatim (no quoting, callers pass plain
/// numbers and identifiers).
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    auto emit_row = [&](const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    };
    emit_row(header);
    for (const auto& r : rows) emit_row(r);
}

inline std::string format_double(double x, int precision = 12) {
    std::ostringstream ss;
    ss << std::setprecision(precision) << x;
    return ss.str();
}

/// ASCII point cloud with camera centers in red and features in gray. 2D
/// scenes are written with z = 0.
inline void write_pointcloud(const std::string& path, const PointEstimate& estimate,
                             WorldMode mode) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    const size_t n = estimate.features.size() + estimate.poses.size();
    out << "ply\nformat ascii 1.0\n";
    out << "comment cameras are red, features are gray\n";
    out << "element vertex " << n << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    auto emit = [&](const Vec& p, const char* color) {
        out << p(0) << ' ' << p(1) << ' ' << (mode.world_dim() == 3 ? p(2) : 0.0) << ' '
            << color << '\n';
    };
    for (const auto& [i, x] : estimate.features) emit(x, "200 200 200");
    for (const auto& [j, pose] : estimate.poses) emit(pose.center, "255 0 0");
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<OuterIterationStat>& trace) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : trace)
        rows.push_back({std::to_string(s.iteration), format_double(s.error)});
    write_csv(path, {"iteration", "error"}, rows);
}

}  // namespace cgsam
