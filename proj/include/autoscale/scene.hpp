#pragma once
// Scene-level domain types shared by every module: tokens, scene graphs,
// semantic labels, per-scene driving subscores and datasets.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace autoscale {

enum class Provenance : std::uint8_t { Real, Synthetic, Calibration };

struct SceneToken {
    std::string id;
    Provenance provenance = Provenance::Real;
};

enum class NodeKind : std::uint8_t { Ego, DynamicAgent, MapPedCrossing, MapDivider, MapBoundary };
inline constexpr int kNodeKindCount = 5;

enum class EdgeKind : std::uint8_t { MapToDynamic, DynamicToDynamic, AllToEgo };

inline constexpr int kDynamicWidth = 5;  // x, y, heading, curvature, speed
inline constexpr int kMapWidth = 4;      // x, y, heading, curvature
inline constexpr int kEdgeWidth = 4;     // dx, dy, dheading, dcurvature

inline bool is_dynamic(NodeKind k) { return k == NodeKind::Ego || k == NodeKind::DynamicAgent; }
inline int row_width(NodeKind k) { return is_dynamic(k) ? kDynamicWidth : kMapWidth; }

struct Node {
    NodeKind kind = NodeKind::DynamicAgent;
    Eigen::MatrixXd sequence;  // t_len x row_width(kind)
};

struct DirectedEdge {
    EdgeKind kind = EdgeKind::AllToEgo;
    int src = 0;
    int dst = 0;
    Eigen::MatrixXd sequence;  // t_len x kEdgeWidth
};

struct SceneGraph {
    std::vector<Node> nodes;
    std::vector<DirectedEdge> edges;
    int t_len = 12;
    int t_hist = 8;
    int t_fut = 4;

    // Index of the ego node, or -1 when absent.
    int ego_index() const;
};

enum class Command : std::uint8_t { Straight, Left, Right, Stop };

struct SemanticLabels {
    Command command = Command::Straight;
    bool overlap = false;

    // Joint (command, overlap) label used by supervised contrastive training.
    int joint() const { return static_cast<int>(command) * 2 + (overlap ? 1 : 0); }
};

struct SubscoreVector {
    double nc = 1, dac = 1, ddc = 1, tlc = 1, ep = 1, ttc = 1, lk = 1, hc = 1, ec = 1, comf = 1;

    static constexpr int kSize = 10;
    Eigen::VectorXd as_vector() const;
    static SubscoreVector from_vector(const Eigen::VectorXd& v);
};

struct Dataset {
    std::vector<SceneToken> tokens;
    std::unordered_map<std::string, SceneGraph> graphs;
    std::unordered_map<std::string, SemanticLabels> labels;
    std::unordered_map<std::string, SubscoreVector> metrics;

    std::size_t size() const { return tokens.size(); }
    std::size_t count(Provenance p) const;
    std::vector<std::string> ids() const;

    // Copies one token (and its attached records) from another dataset.
    void add_from(const Dataset& other, const SceneToken& token);
    bool contains(const std::string& id) const { return graphs.count(id) != 0; }
};

struct Budget {
    std::int64_t b = 0;
    std::int64_t n_total = 0;

    static Budget make(std::int64_t n0, std::int64_t b) { return Budget{b, n0 + b}; }
};

struct Violation {
    std::string token;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Checks every structural invariant of the dataset; an empty report means valid.
ValidationReport validate_dataset(const Dataset& d);

// Same, plus disjointness of calibration ids from the other pools.
ValidationReport validate_pools(const Dataset& real, const Dataset& syn, const Dataset& cal);

std::vector<Violation> validate_graph(const SceneGraph& g, const std::string& token);

struct CalibrationSplit {
    Dataset calibration;
    Dataset remainder;
};

// Cluster-stratified split. Per-cluster counts are floored, then the remaining
// quota goes to clusters with the largest fractional remainders (ties by
// cluster index); tokens within a cluster are chosen by a seeded shuffle.
CalibrationSplit split_calibration(const Dataset& pool, double fraction,
                                   const std::map<std::string, int>& cluster_ids, std::uint64_t seed);

// Headings are stored wrapped to (-pi, pi].
double wrap_angle(double a);

// Per-step [dx, dy, dheading, dcurvature] of src relative to dst.
Eigen::MatrixXd relative_edge_features(const Node& src, const Node& dst);

// Recomputes every edge sequence from the current node sequences.
void rebuild_edge_features(SceneGraph& g);

std::string_view to_string(Provenance p);
std::string_view to_string(NodeKind k);
std::string_view to_string(EdgeKind k);
std::string_view to_string(Command c);
Provenance provenance_from_string(std::string_view s);
NodeKind node_kind_from_string(std::string_view s);
EdgeKind edge_kind_from_string(std::string_view s);
Command command_from_string(std::string_view s);

}  // namespace autoscale
