#include "autoscale/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace autoscale {

int SceneGraph::ego_index() const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].kind == NodeKind::Ego) return static_cast<int>(i);
    return -1;
}

Eigen::VectorXd SubscoreVector::as_vector() const {
    Eigen::VectorXd v(kSize);
    v << nc, dac, ddc, tlc, ep, ttc, lk, hc, ec, comf;
    return v;
}

SubscoreVector SubscoreVector::from_vector(const Eigen::VectorXd& v) {
    if (v.size() != kSize) throw std::invalid_argument("subscore vector must have 10 components");
    return SubscoreVector{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
}

std::size_t Dataset::count(Provenance p) const {
    return static_cast<std::size_t>(
        std::count_if(tokens.begin(), tokens.end(), [p](const SceneToken& t) { return t.provenance == p; }));
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.id);
    return out;
}

void Dataset::add_from(const Dataset& other, const SceneToken& token) {
    tokens.push_back(token);
    if (auto it = other.graphs.find(token.id); it != other.graphs.end()) graphs.emplace(token.id, it->second);
    if (auto it = other.labels.find(token.id); it != other.labels.end()) labels.emplace(token.id, it->second);
    if (auto it = other.metrics.find(token.id); it != other.metrics.end()) metrics.emplace(token.id, it->second);
}

double wrap_angle(double a) {
    constexpr double pi = std::numbers::pi;
    double r = std::fmod(a + pi, 2.0 * pi);
    if (r < 0) r += 2.0 * pi;
    r -= pi;
    // fmod maps +pi to -pi; the stored range is (-pi, pi].
    if (r <= -pi) r += 2.0 * pi;
    return r;
}

Eigen::MatrixXd relative_edge_features(const Node& src, const Node& dst) {
    const Eigen::Index t_len = src.sequence.rows();
    Eigen::MatrixXd out(t_len, kEdgeWidth);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        out(t, 0) = src.sequence(t, 0) - dst.sequence(t, 0);
        out(t, 1) = src.sequence(t, 1) - dst.sequence(t, 1);
        out(t, 2) = wrap_angle(src.sequence(t, 2) - dst.sequence(t, 2));
        out(t, 3) = src.sequence(t, 3) - dst.sequence(t, 3);
    }
    return out;
}

void rebuild_edge_features(SceneGraph& g) {
    for (auto& e : g.edges) e.sequence = relative_edge_features(g.nodes[e.src], g.nodes[e.dst]);
}

namespace {

bool edge_kind_consistent(EdgeKind kind, NodeKind src, NodeKind dst) {
    switch (kind) {
        case EdgeKind::MapToDynamic: return !is_dynamic(src) && is_dynamic(dst);
        case EdgeKind::DynamicToDynamic: return is_dynamic(src) && is_dynamic(dst);
        case EdgeKind::AllToEgo: return dst == NodeKind::Ego;
    }
    return false;
}

}  // namespace

std::vector<Violation> validate_graph(const SceneGraph& g, const std::string& token) {
    std::vector<Violation> out;
    auto fail = [&](std::string msg) { out.push_back({token, std::move(msg)}); };

    if (g.t_len <= 0) fail("t_len must be positive");
    if (g.t_hist < 0 || g.t_fut < 0 || g.t_hist + g.t_fut != g.t_len) fail("t_hist + t_fut must equal t_len");

    int egos = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const Node& n = g.nodes[i];
        const std::string where = "node " + std::to_string(i) + " (" + std::string(to_string(n.kind)) + ")";
        if (n.kind == NodeKind::Ego) ++egos;
        if (n.sequence.rows() != g.t_len) fail(where + ": sequence length " + std::to_string(n.sequence.rows()) +
                                               " != t_len " + std::to_string(g.t_len));
        if (n.sequence.cols() != row_width(n.kind))
            fail(where + ": row width " + std::to_string(n.sequence.cols()) + " != " +
                 std::to_string(row_width(n.kind)));
        if (!n.sequence.allFinite()) {
            fail(where + ": non-finite feature");
        } else if (n.sequence.cols() >= 3) {
            for (Eigen::Index t = 0; t < n.sequence.rows(); ++t) {
                double th = n.sequence(t, 2);
                if (!(th > -std::numbers::pi && th <= std::numbers::pi)) {
                    fail(where + ": heading not wrapped at step " + std::to_string(t));
                    break;
                }
            }
        }
    }
    if (egos != 1) fail("expected exactly one ego node, found " + std::to_string(egos));

    const int n_nodes = static_cast<int>(g.nodes.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const DirectedEdge& edge = g.edges[e];
        const std::string where = "edge " + std::to_string(e) + " (" + std::string(to_string(edge.kind)) + ")";
        if (edge.src < 0 || edge.src >= n_nodes || edge.dst < 0 || edge.dst >= n_nodes) {
            fail(where + ": endpoint out of range");
            continue;
        }
        if (!edge_kind_consistent(edge.kind, g.nodes[edge.src].kind, g.nodes[edge.dst].kind))
            fail(where + ": kind inconsistent with endpoint kinds");
        if (edge.sequence.rows() != g.t_len || edge.sequence.cols() != kEdgeWidth)
            fail(where + ": sequence shape mismatch");
        if (!edge.sequence.allFinite()) fail(where + ": non-finite feature");
    }
    return out;
}

ValidationReport validate_dataset(const Dataset& d) {
    ValidationReport report;
    std::unordered_set<std::string> seen;
    for (const auto& tok : d.tokens) {
        if (tok.id.empty()) report.violations.push_back({tok.id, "empty token id"});
        if (!seen.insert(tok.id).second) report.violations.push_back({tok.id, "duplicate token id"});
        auto it = d.graphs.find(tok.id);
        if (it == d.graphs.end()) {
            report.violations.push_back({tok.id, "missing scene graph"});
            continue;
        }
        auto v = validate_graph(it->second, tok.id);
        report.violations.insert(report.violations.end(), v.begin(), v.end());
        if (auto m = d.metrics.find(tok.id); m != d.metrics.end()) {
            Eigen::VectorXd s = m->second.as_vector();
            if (!s.allFinite() || s.minCoeff() < 0.0 || s.maxCoeff() > 1.0)
                report.violations.push_back({tok.id, "subscore outside [0,1]"});
        }
    }
    return report;
}

ValidationReport validate_pools(const Dataset& real, const Dataset& syn, const Dataset& cal) {
    ValidationReport report;
    for (const Dataset* d : {&real, &syn, &cal}) {
        auto r = validate_dataset(*d);
        report.violations.insert(report.violations.end(), r.violations.begin(), r.violations.end());
    }
    std::unordered_set<std::string> others;
    for (const auto& t : real.tokens) others.insert(t.id);
    for (const auto& t : syn.tokens) {
        if (others.count(t.id)) report.violations.push_back({t.id, "token appears in both real and synthetic pools"});
        others.insert(t.id);
    }
    for (const auto& t : cal.tokens)
        if (others.count(t.id))
            report.violations.push_back({t.id, "calibration token also present in real or synthetic pool"});
    return report;
}

CalibrationSplit split_calibration(const Dataset& pool, double fraction, const std::map<std::string, int>& cluster_ids,
                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("calibration fraction must lie in (0, 1)");

    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < pool.tokens.size(); ++i) {
        auto it = cluster_ids.find(pool.tokens[i].id);
        if (it == cluster_ids.end()) throw std::invalid_argument("token without cluster id: " + pool.tokens[i].id);
        members[it->second].push_back(i);
    }

    const auto target = static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(pool.size()) + 0.5));
    std::vector<int> cluster_order;
    std::vector<std::int64_t> quota;
    std::vector<double> remainder;
    std::int64_t assigned = 0;
    for (const auto& [c, idx] : members) {
        double exact = fraction * static_cast<double>(idx.size());
        auto q = static_cast<std::int64_t>(std::floor(exact));
        cluster_order.push_back(c);
        quota.push_back(q);
        remainder.push_back(exact - static_cast<double>(q));
        assigned += q;
    }
    std::vector<std::size_t> by_remainder(quota.size());
    for (std::size_t i = 0; i < by_remainder.size(); ++i) by_remainder[i] = i;
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; i < by_remainder.size() && assigned < target; ++i) {
        std::size_t c = by_remainder[i];
        if (remainder[c] <= 0.0) break;
        ++quota[c];
        ++assigned;
    }

    std::vector<bool> to_cal(pool.tokens.size(), false);
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < cluster_order.size(); ++c) {
        std::vector<std::size_t> idx = members[cluster_order[c]];
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pool.tokens[a].id < pool.tokens[b].id; });
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::int64_t k = 0; k < quota[c]; ++k) to_cal[idx[static_cast<std::size_t>(k)]] = true;
    }

    CalibrationSplit out;
    for (std::size_t i = 0; i < pool.tokens.size(); ++i) {
        SceneToken tok = pool.tokens[i];
        if (to_cal[i]) {
            tok.provenance = Provenance::Calibration;
            out.calibration.add_from(pool, tok);
        } else {
            out.remainder.add_from(pool, tok);
        }
    }
    return out;
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Real: return "real";
        case Provenance::Synthetic: return "synthetic";
        case Provenance::Calibration: return "calibration";
    }
    return "?";
}

std::string_view to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Ego: return "ego";
        case NodeKind::DynamicAgent: return "dynamic_agent";
        case NodeKind::MapPedCrossing: return "map_ped_crossing";
        case NodeKind::MapDivider: return "map_divider";
        case NodeKind::MapBoundary: return "map_boundary";
    }
    return "?";
}

std::string_view to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::MapToDynamic: return "map_to_dynamic";
        case EdgeKind::DynamicToDynamic: return "dynamic_to_dynamic";
        case EdgeKind::AllToEgo: return "all_to_ego";
    }
    return "?";
}

std::string_view to_string(Command c) {
    switch (c) {
        case Command::Straight: return "straight";
        case Command::Left: return "left";
        case Command::Right: return "right";
        case Command::Stop: return "stop";
    }
    return "?";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "real") return Provenance::Real;
    if (s == "synthetic") return Provenance::Synthetic;
    if (s == "calibration") return Provenance::Calibration;
    throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

NodeKind node_kind_from_string(std::string_view s) {
    for (int k = 0; k < kNodeKindCount; ++k)
        if (to_string(static_cast<NodeKind>(k)) == s) return static_cast<NodeKind>(k);
    throw std::invalid_argument("unknown node kind '" + std::string(s) + "'");
}

EdgeKind edge_kind_from_string(std::string_view s) {
    for (int k = 0; k < 3; ++k)
        if (to_string(static_cast<EdgeKind>(k)) == s) return static_cast<EdgeKind>(k);
    throw std::invalid_argument("unknown edge kind '" + std::string(s) + "'");
}

Command command_from_string(std::string_view s) {
    for (int k = 0; k < 4; ++k)
        if (to_string(static_cast<Command>(k)) == s) return static_cast<Command>(k);
    throw std::invalid_argument("unknown command '" + std::string(s) + "'");
}

}  // namespace autoscale
