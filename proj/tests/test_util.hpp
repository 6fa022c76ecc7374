#pragma once
// Small fixture builders shared by the unit tests.

#include <random>
#include <string>

#include "autoscale/scene.hpp"

namespace autoscale::testing {

inline Node make_node(NodeKind kind, int t_len, std::mt19937_64& rng, double spread = 5.0) {
    std::uniform_real_distribution<double> u(-spread, spread);
    std::uniform_real_distribution<double> h(-3.0, 3.0);
    std::uniform_real_distribution<double> k(-0.05, 0.05);
    std::uniform_real_distribution<double> v(0.0, 12.0);
    Node n{kind, Eigen::MatrixXd(t_len, row_width(kind))};
    for (int t = 0; t < t_len; ++t) {
        n.sequence(t, 0) = u(rng);
        n.sequence(t, 1) = u(rng);
        n.sequence(t, 2) = h(rng);
        n.sequence(t, 3) = k(rng);
        if (is_dynamic(kind)) n.sequence(t, 4) = v(rng);
    }
    return n;
}

// Ego + agents + map elements; every other node feeds the ego, agents see
// map elements and each other.
inline SceneGraph random_graph(std::mt19937_64& rng, int t_len = 4, int agents = 2, int maps = 2) {
    SceneGraph g;
    g.t_len = t_len;
    g.t_hist = t_len / 2;
    g.t_fut = t_len - g.t_hist;
    g.nodes.push_back(make_node(NodeKind::Ego, t_len, rng));
    for (int a = 0; a < agents; ++a) g.nodes.push_back(make_node(NodeKind::DynamicAgent, t_len, rng));
    const NodeKind map_kinds[] = {NodeKind::MapDivider, NodeKind::MapBoundary, NodeKind::MapPedCrossing};
    for (int m = 0; m < maps; ++m) g.nodes.push_back(make_node(map_kinds[m % 3], t_len, rng));
    const int n = static_cast<int>(g.nodes.size());
    for (int i = 1; i < n; ++i) g.edges.push_back({EdgeKind::AllToEgo, i, 0, {}});
    for (int a = 1; a <= agents; ++a) {
        for (int b = 1; b <= agents; ++b)
            if (a != b) g.edges.push_back({EdgeKind::DynamicToDynamic, a, b, {}});
        for (int m = agents + 1; m < n; ++m) g.edges.push_back({EdgeKind::MapToDynamic, m, a, {}});
    }
    rebuild_edge_features(g);
    return g;
}

inline Dataset random_dataset(std::mt19937_64& rng, int n, Provenance prov, const std::string& prefix, int t_len = 4) {
    Dataset d;
    std::uniform_int_distribution<int> cmd(0, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        SceneToken tok{prefix + std::to_string(i), prov};
        d.tokens.push_back(tok);
        d.graphs[tok.id] = random_graph(rng, t_len);
        d.labels[tok.id] = SemanticLabels{static_cast<Command>(cmd(rng)), u(rng) < 0.5};
        if (i % 3 != 2) {
            SubscoreVector s;
            Eigen::VectorXd v(SubscoreVector::kSize);
            for (int k = 0; k < v.size(); ++k) v[k] = u(rng);
            d.metrics[tok.id] = SubscoreVector::from_vector(v);
        }
    }
    return d;
}

}  // namespace autoscale::testing
