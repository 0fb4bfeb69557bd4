#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgsam/gaussian.hpp"
#include "cgsam/variable.hpp"

namespace cgsam {

/// One matched observation: feature `feature` measured at `image` in camera
/// `camera`. `sigma` is the expected measurement noise; non-positive means
/// "use the solver default".
struct Track {
    int camera = -1;
    int feature = -1;
    Vec image;
    double sigma = 0.0;
};

/// Cluster C_j^i = {x_j^i, p_j, X^i}: the variables of a single projection,
/// carrying its measured observation and (once initialized) a joint belief.
struct Cluster {
    int id = -1;
    Track observation;
    VariableId projection_var, pose_var, feature_var;
    GaussianFactor belief;

    static Cluster from_track(int id, const Track& t, WorldMode mode) {
        Cluster c;
        c.id = id;
        c.observation = t;
        c.projection_var = VariableId::projection_var(t.camera, t.feature, mode);
        c.pose_var = VariableId::pose_var(t.camera, mode);
        c.feature_var = VariableId::feature_var(t.feature, mode);
        return c;
    }

    std::vector<VariableId> scope() const {
        std::vector<VariableId> s = {feature_var, pose_var, projection_var};
        std::sort(s.begin(), s.end());
        return s;
    }

    bool contains(const VariableId& v) const {
        return v == projection_var || v == pose_var || v == feature_var;
    }
};

/// Undirected edge between clusters `a` and `b`, labeled by the sepset
/// variables (a subset of the two scopes' intersection).
struct Sepset {
    int a = -1, b = -1;
    std::vector<VariableId> variables;

    int other(int cluster_id) const { return cluster_id == a ? b : a; }
};

class ClusterGraph {
public:
    ClusterGraph() : mode_(WorldMode::threed()) {}
    ClusterGraph(WorldMode mode, std::vector<Cluster> clusters,
                 std::vector<Sepset> sepsets)
        : mode_(mode), clusters_(std::move(clusters)), sepsets_(std::move(sepsets)) {
        for (size_t i = 0; i < clusters_.size(); ++i)
            if (clusters_[i].id != static_cast<int>(i))
                throw Error("cluster ids must be dense and ordered");
        adj_.assign(clusters_.size(), {});
        for (size_t e = 0; e < sepsets_.size(); ++e) {
            auto& s = sepsets_[e];
            if (s.a < 0 || s.b < 0 || s.a >= static_cast<int>(clusters_.size()) ||
                s.b >= static_cast<int>(clusters_.size()) || s.a == s.b)
                throw Error("sepset endpoints out of range");
            std::sort(s.variables.begin(), s.variables.end());
            adj_[s.a].push_back(static_cast<int>(e));
            adj_[s.b].push_back(static_cast<int>(e));
        }
    }

    WorldMode mode() const { return mode_; }
    const std::vector<Cluster>& clusters() const { return clusters_; }
    std::vector<Cluster>& clusters() { return clusters_; }
    const std::vector<Sepset>& sepsets() const { return sepsets_; }
    const std::vector<int>& edges_of(int cluster_id) const { return adj_[cluster_id]; }

    /// All latent (pose and feature) variables appearing in any cluster.
    std::vector<VariableId> latent_variables() const {
        std::set<VariableId> vars;
        for (const auto& c : clusters_) {
            vars.insert(c.pose_var);
            vars.insert(c.feature_var);
        }
        return {vars.begin(), vars.end()};
    }

    std::vector<int> clusters_containing(const VariableId& v) const {
        std::vector<int> out;
        for (const auto& c : clusters_)
            if (c.contains(v)) out.push_back(c.id);
        return out;
    }

private:
    WorldMode mode_;
    std::vector<Cluster> clusters_;
    std::vector<Sepset> sepsets_;
    std::vector<std::vector<int>> adj_;
};

/// One cluster per observed projection, ordered by (camera, feature).
/// Every feature must be observed by at least two cameras.
inline std::vector<Cluster> make_clusters(const std::vector<Track>& tracks,
                                          WorldMode mode) {
    std::vector<Track> sorted = tracks;
    std::sort(sorted.begin(), sorted.end(), [](const Track& x, const Track& y) {
        return std::pair(x.camera, x.feature) < std::pair(y.camera, y.feature);
    });
    std::map<int, std::set<int>> cams_seeing;
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0 && sorted[i].camera == sorted[i - 1].camera &&
            sorted[i].feature == sorted[i - 1].feature)
            throw Error("duplicate track for camera " + std::to_string(sorted[i].camera) +
                        ", feature " + std::to_string(sorted[i].feature));
        cams_seeing[sorted[i].feature].insert(sorted[i].camera);
    }
    for (const auto& [feat, cams] : cams_seeing)
        if (cams.size() < 2) throw UnderconstrainedFeature(feat);

    std::vector<Cluster> clusters;
    clusters.reserve(sorted.size());
    for (const auto& t : sorted)
        clusters.push_back(Cluster::from_track(static_cast<int>(clusters.size()), t, mode));
    return clusters;
}

/// Builds the cluster graph by forming, for every variable, a tree over the
/// clusters containing it (a star centered on the lowest cluster id) and
/// superimposing the trees. Edges selected by several variables merge into
/// one edge whose sepset is the union, and the result satisfies the running
/// intersection property by construction.
inline ClusterGraph build_cluster_graph(std::vector<Cluster> clusters, WorldMode mode) {
    std::map<VariableId, std::vector<int>> containing;
    for (const auto& c : clusters)
        for (const auto& v : c.scope()) containing[v].push_back(c.id);

    std::map<std::pair<int, int>, std::set<VariableId>> edge_vars;
    for (const auto& [v, ids] : containing) {
        if (ids.size() < 2) continue;
        const int center = *std::min_element(ids.begin(), ids.end());
        for (int id : ids)
            if (id != center) edge_vars[{std::min(center, id), std::max(center, id)}].insert(v);
    }

    std::vector<Sepset> sepsets;
    sepsets.reserve(edge_vars.size());
    for (const auto& [e, vars] : edge_vars)
        sepsets.push_back({e.first, e.second, {vars.begin(), vars.end()}});
    return ClusterGraph(mode, std::move(clusters), std::move(sepsets));
}

struct RipCheck {
    VariableId variable;
    int cluster_count = 0;
    int edge_count = 0;
    bool connected = false;
    bool acyclic = false;
    bool pass = false;
};

/// Diagnostic result of the running-intersection check; `pass` requires every
/// variable's labeled edge subgraph to be a spanning tree of its clusters and
/// every sepset to sit inside both endpoint scopes.
struct RipReport {
    bool pass = true;
    std::vector<RipCheck> checks;
    std::vector<std::string> sepset_violations;

    std::string summary() const {
        std::ostringstream os;
        os << (pass ? "RIP ok" : "RIP violated");
        for (const auto& c : checks)
            if (!c.pass)
                os << "; " << c.variable.name() << ": "
                   << (c.connected ? "" : "disconnected ")
                   << (c.acyclic ? "" : "cyclic");
        for (const auto& s : sepset_violations) os << "; " << s;
        return os.str();
    }
};

namespace detail {
class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }
    int find(int x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    bool unite(int x, int y) {
        x = find(x);
        y = find(y);
        if (x == y) return false;
        parent_[x] = y;
        return true;
    }

private:
    std::vector<int> parent_;
};
}  // namespace detail

inline RipReport validate_rip(const ClusterGraph& graph) {
    RipReport report;

    std::set<VariableId> vars;
    for (const auto& c : graph.clusters())
        for (const auto& v : c.scope()) vars.insert(v);

    for (const auto& s : graph.sepsets()) {
        if (s.variables.empty()) {
            report.sepset_violations.push_back(
                "empty sepset on edge (" + std::to_string(s.a) + ", " +
                std::to_string(s.b) + ")");
            continue;
        }
        for (const auto& v : s.variables)
            if (!graph.clusters()[s.a].contains(v) || !graph.clusters()[s.b].contains(v))
                report.sepset_violations.push_back(
                    "sepset variable " + v.name() + " not in both endpoints of (" +
                    std::to_string(s.a) + ", " + std::to_string(s.b) + ")");
    }

    for (const auto& v : vars) {
        RipCheck check;
        check.variable = v;
        const std::vector<int> ids = graph.clusters_containing(v);
        check.cluster_count = static_cast<int>(ids.size());

        std::map<int, int> local;  // cluster id -> dense index
        for (size_t i = 0; i < ids.size(); ++i) local[ids[i]] = static_cast<int>(i);

        detail::UnionFind uf(static_cast<int>(ids.size()));
        int components = static_cast<int>(ids.size());
        bool cycle = false;
        for (const auto& s : graph.sepsets()) {
            if (!std::binary_search(s.variables.begin(), s.variables.end(), v)) continue;
            if (!local.count(s.a) || !local.count(s.b)) continue;  // reported above
            ++check.edge_count;
            if (uf.unite(local[s.a], local[s.b]))
                --components;
            else
                cycle = true;
        }
        check.connected = components == 1;
        check.acyclic = !cycle;
        check.pass = check.connected && check.acyclic;
        if (!check.pass) report.pass = false;
        report.checks.push_back(check);
    }
    if (!report.sepset_violations.empty()) report.pass = false;
    return report;
}

/// DOT dump for documentation and debugging.
inline std::string to_dot(const ClusterGraph& graph) {
    std::ostringstream os;
    os << "graph clusters {\n";
    for (const auto& c : graph.clusters())
        os << "  c" << c.id << " [label=\"C" << c.observation.camera << "_"
           << c.observation.feature << "\"];\n";
    for (const auto& s : graph.sepsets()) {
        os << "  c" << s.a << " -- c" << s.b << " [label=\"";
        for (size_t i = 0; i < s.variables.size(); ++i)
            os << (i ? "," : "") << s.variables[i].name();
        os << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace cgsam
