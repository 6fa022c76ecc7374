#include "autoscale/graph_rae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace autoscale::rae {

namespace {

constexpr double kNormEps = 1e-12;

using VarSet = ParamSet<ad::Var>;

// Graphs flattened into index tables so one tape pass covers a whole batch.
struct Batch {
    int n_scenes = 0;
    int n_nodes = 0;
    int n_edges = 0;
    int t_len = 0;
    Matrix dyn_rows, map_rows, edge_rows;
    ad::Index dyn_node, dyn_step, map_node, map_step, edge_id, edge_step;
    ad::Index node_kind, edge_src, edge_dst, ego;
    ad::Index dec_node, dec_step;
    Matrix dec_target, dec_mask;
    std::vector<int> node_offset;
    std::vector<int> node_width;
};

Batch make_batch(const std::vector<const SceneGraph*>& graphs, int t_len) {
    Batch b;
    b.t_len = t_len;
    b.n_scenes = static_cast<int>(graphs.size());
    int n_dyn_rows = 0, n_map_rows = 0, n_edge_rows = 0;
    for (const SceneGraph* g : graphs) {
        if (g->t_len != t_len)
            throw std::invalid_argument("dimension mismatch: graph t_len " + std::to_string(g->t_len) +
                                        " vs params t_len " + std::to_string(t_len));
        for (const auto& n : g->nodes) {
            if (n.sequence.rows() != t_len || n.sequence.cols() != row_width(n.kind))
                throw std::invalid_argument("dimension mismatch: node sequence shape");
            (is_dynamic(n.kind) ? n_dyn_rows : n_map_rows) += t_len;
        }
        for (const auto& e : g->edges) {
            if (e.sequence.rows() != t_len || e.sequence.cols() != kEdgeWidth)
                throw std::invalid_argument("dimension mismatch: edge sequence shape");
            n_edge_rows += t_len;
        }
    }
    b.dyn_rows.resize(n_dyn_rows, kDynamicWidth);
    b.map_rows.resize(n_map_rows, kMapWidth);
    b.edge_rows.resize(n_edge_rows, kEdgeWidth);

    const Eigen::RowVectorXd dyn_scale = node_feature_scale(NodeKind::Ego);
    const Eigen::RowVectorXd map_scale = node_feature_scale(NodeKind::MapDivider);
    const Eigen::RowVectorXd e_scale = edge_feature_scale();

    int dyn_r = 0, map_r = 0, edge_r = 0;
    for (const SceneGraph* g : graphs) {
        const int offset = b.n_nodes;
        b.node_offset.push_back(offset);
        const int ego = g->ego_index();
        if (ego < 0) throw std::invalid_argument("scene graph has no ego node");
        b.ego.push_back(offset + ego);
        for (std::size_t i = 0; i < g->nodes.size(); ++i) {
            const Node& n = g->nodes[i];
            const int node = offset + static_cast<int>(i);
            b.node_kind.push_back(static_cast<int>(n.kind));
            b.node_width.push_back(row_width(n.kind));
            for (int t = 0; t < t_len; ++t) {
                if (is_dynamic(n.kind)) {
                    b.dyn_rows.row(dyn_r++) = n.sequence.row(t).cwiseProduct(dyn_scale);
                    b.dyn_node.push_back(node);
                    b.dyn_step.push_back(t);
                } else {
                    b.map_rows.row(map_r++) = n.sequence.row(t).cwiseProduct(map_scale);
                    b.map_node.push_back(node);
                    b.map_step.push_back(t);
                }
            }
        }
        for (const auto& e : g->edges) {
            const int edge = b.n_edges++;
            b.edge_src.push_back(offset + e.src);
            b.edge_dst.push_back(offset + e.dst);
            for (int t = 0; t < t_len; ++t) {
                b.edge_rows.row(edge_r++) = e.sequence.row(t).cwiseProduct(e_scale);
                b.edge_id.push_back(edge);
                b.edge_step.push_back(t);
            }
        }
        b.n_nodes += static_cast<int>(g->nodes.size());
    }

    b.dec_target = Matrix::Zero(static_cast<Eigen::Index>(b.n_nodes) * t_len, kDynamicWidth);
    b.dec_mask = Matrix::Zero(b.dec_target.rows(), kDynamicWidth);
    int row = 0;
    for (const SceneGraph* g : graphs) {
        for (const auto& n : g->nodes) {
            const int w = row_width(n.kind);
            const Eigen::RowVectorXd scale = node_feature_scale(n.kind);
            const int node = static_cast<int>(b.dec_node.size()) / t_len;
            for (int t = 0; t < t_len; ++t) {
                b.dec_target.row(row).head(w) = n.sequence.row(t).cwiseProduct(scale);
                b.dec_mask.row(row).head(w).setOnes();
                b.dec_node.push_back(node);
                b.dec_step.push_back(t);
                ++row;
            }
        }
    }
    return b;
}

VarSet to_tape(ad::Tape& t, const GraphRaeParams& p, bool with_grad) {
    VarSet v;
    v.layers.resize(p.layers.size());
    auto& pp = const_cast<GraphRaeParams&>(p);
    zip_blocks(pp, v, [&](const std::string&, Matrix& m, ad::Var& var) {
        var = with_grad ? t.variable(m) : t.constant(m);
    });
    return v;
}

ad::Var mlp(ad::Tape& t, const MlpT<ad::Var>& m, ad::Var x) {
    ad::Var h = t.relu(t.add_row(t.matmul(x, m.w1), m.b1));
    return t.add_row(t.matmul(h, m.w2), m.b2);
}

struct Encoded {
    ad::Var nodes;
    ad::Var edges;
};

Encoded encode(ad::Tape& t, const VarSet& v, const Batch& b) {
    const double inv_t = 1.0 / b.t_len;
    ad::Var dyn = t.add(mlp(t, v.node_dyn, t.constant(b.dyn_rows)), t.gather_rows(v.pos_emb, b.dyn_step));
    ad::Var map = t.add(mlp(t, v.node_map, t.constant(b.map_rows)), t.gather_rows(v.pos_emb, b.map_step));
    ad::Var summed = t.add(t.scatter_add_rows(dyn, b.dyn_node, b.n_nodes), t.scatter_add_rows(map, b.map_node, b.n_nodes));
    ad::Var nodes = t.add(t.scale(summed, inv_t), t.gather_rows(v.sem_emb, b.node_kind));
    ad::Var e = t.add(mlp(t, v.edge, t.constant(b.edge_rows)), t.gather_rows(v.pos_emb, b.edge_step));
    ad::Var edges = t.scale(t.scatter_add_rows(e, b.edge_id, b.n_edges), inv_t);
    return {nodes, edges};
}

ad::Var layer_forward(ad::Tape& t, const LayerT<ad::Var>& l, ad::Var nodes, ad::Var edges, const ad::Index& src,
                      const ad::Index& dst, int heads) {
    ad::Var q = t.matmul(nodes, l.wq);
    ad::Var kv_in = t.concat_cols(t.gather_rows(nodes, src), edges);
    ad::Var k = t.matmul(kv_in, l.wk);
    ad::Var val = t.matmul(kv_in, l.wv);
    ad::Var att = t.matmul(t.edge_attention(q, k, val, dst, heads), l.wo);
    return t.add(nodes, t.mul_row(att, t.sigmoid(l.gate)));
}

ad::Var propagate(ad::Tape& t, const VarSet& v, const Batch& b, const Encoded& enc, int heads) {
    ad::Var h = enc.nodes;
    for (const auto& l : v.layers) h = layer_forward(t, l, h, enc.edges, b.edge_src, b.edge_dst, heads);
    return h;
}

ad::Var decode(ad::Tape& t, const VarSet& v, const Batch& b, ad::Var nodes) {
    ad::Var in = t.add(t.gather_rows(nodes, b.dec_node), t.gather_rows(v.pos_emb, b.dec_step));
    return mlp(t, v.decoder, in);
}

std::vector<const SceneGraph*> pointers(const std::vector<SceneGraph>& gs) {
    std::vector<const SceneGraph*> out;
    out.reserve(gs.size());
    for (const auto& g : gs) out.push_back(&g);
    return out;
}

void xavier(Matrix& m, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
}

MlpT<Matrix> make_mlp(int in, int hidden, int out) {
    return {Matrix::Zero(in, hidden), Matrix::Zero(1, hidden), Matrix::Zero(hidden, out), Matrix::Zero(1, out)};
}

struct ViewPair {
    std::vector<SceneGraph> a, b;
};

ViewPair make_views(const TrainingBatch& batch, Augmenter& aug) {
    ViewPair v;
    v.a.reserve(batch.graphs.size());
    v.b.reserve(batch.graphs.size());
    for (const SceneGraph* g : batch.graphs) {
        v.a.push_back(aug(*g));
        v.b.push_back(aug(*g));
    }
    return v;
}

// Builds the full objective on the tape and fills the breakdown.
ad::Var build_loss(ad::Tape& t, const VarSet& v, const GraphRaeParams& p, const GraphRaeConfig& cfg,
                   const TrainingBatch& batch, const ViewPair& views, LossBreakdown& out) {
    if (batch.graphs.empty()) throw std::invalid_argument("empty training batch");
    const int n = static_cast<int>(batch.graphs.size());

    Batch main = make_batch(batch.graphs, p.t_len);
    Encoded enc = encode(t, v, main);
    ad::Var final_nodes = propagate(t, v, main, enc, p.heads);
    ad::Var pred = decode(t, v, main, final_nodes);
    ad::Var recon = t.scale(t.huber_sum(pred, main.dec_target, main.dec_mask, cfg.huber_delta), 1.0 / n);
    ad::Var z = t.normalize_rows(t.gather_rows(final_nodes, main.ego), kNormEps);

    auto embed_views = [&](const std::vector<SceneGraph>& gs) {
        Batch vb = make_batch(pointers(gs), p.t_len);
        Encoded ve = encode(t, v, vb);
        return t.normalize_rows(t.gather_rows(propagate(t, v, vb, ve, p.heads), vb.ego), kNormEps);
    };
    ad::Var za = embed_views(views.a);
    ad::Var zb = embed_views(views.b);

    ContrastiveResult sc = simclr(t.value(za), t.value(zb), cfg.tau);
    ad::Var simclr_v = t.custom_scalar({za, zb}, sc.value, {sc.grad_a, sc.grad_b});
    ContrastiveResult sup = supcon(t.value(z), batch.labels, cfg.tau);
    ad::Var supcon_v = t.custom_scalar({z}, sup.value, {sup.grad_a});

    ad::Index left, right;
    std::vector<Eigen::VectorXd> diffs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (batch.metrics[static_cast<std::size_t>(i)] && batch.metrics[static_cast<std::size_t>(j)]) {
                left.push_back(i);
                right.push_back(j);
                diffs.push_back((*batch.metrics[static_cast<std::size_t>(i)] - *batch.metrics[static_cast<std::size_t>(j)]).cwiseAbs());
            }
    ad::Var metric_v = t.constant(Matrix::Zero(1, 1));
    if (!diffs.empty()) {
        Matrix target(static_cast<Eigen::Index>(diffs.size()), p.metric_dim);
        for (std::size_t r = 0; r < diffs.size(); ++r) {
            if (diffs[r].size() != p.metric_dim) throw std::invalid_argument("dimension mismatch: metric vector width");
            target.row(static_cast<Eigen::Index>(r)) = diffs[r].transpose();
        }
        ad::Var feat = t.abs(t.sub(t.gather_rows(z, left), t.gather_rows(z, right)));
        ad::Var err = t.sub(mlp(t, v.metric_head, feat), t.constant(target));
        metric_v = t.scale(t.sum(t.mul(err, err)), 1.0 / static_cast<double>(diffs.size()));
    }

    ad::Var reg = t.add(t.add(simclr_v, supcon_v), metric_v);
    ad::Var total = t.add(recon, t.scale(reg, cfg.lambda));

    out.recon = t.scalar(recon);
    out.simclr = t.scalar(simclr_v);
    out.supcon = t.scalar(supcon_v);
    out.metric = t.scalar(metric_v);
    out.metric_pairs = static_cast<int>(diffs.size());
    out.lambda = cfg.lambda;
    out.total = t.scalar(total);
    return total;
}

}  // namespace

Eigen::RowVectorXd node_feature_scale(NodeKind kind) {
    Eigen::RowVectorXd s(row_width(kind));
    if (is_dynamic(kind))
        s << 0.1, 0.1, 1.0, 10.0, 0.1;
    else
        s << 0.1, 0.1, 1.0, 10.0;
    return s;
}

Eigen::RowVectorXd edge_feature_scale() {
    Eigen::RowVectorXd s(kEdgeWidth);
    s << 0.1, 0.1, 1.0, 10.0;
    return s;
}

GraphRaeParams GraphRaeParams::zeros(const GraphRaeConfig& cfg) {
    if (cfg.d <= 0 || cfg.heads <= 0 || cfg.d % cfg.heads != 0)
        throw std::invalid_argument("hidden width must be a positive multiple of the head count");
    if (cfg.t_len <= 0 || cfg.layers < 0 || cfg.metric_dim <= 0) throw std::invalid_argument("invalid Graph-RAE dimensions");
    GraphRaeParams p;
    p.d = cfg.d;
    p.heads = cfg.heads;
    p.t_len = cfg.t_len;
    p.metric_dim = cfg.metric_dim;
    const int d = cfg.d;
    p.node_dyn = make_mlp(kDynamicWidth, d, d);
    p.node_map = make_mlp(kMapWidth, d, d);
    p.edge = make_mlp(kEdgeWidth, d, d);
    p.sem_emb = Matrix::Zero(kNodeKindCount, d);
    p.pos_emb = Matrix::Zero(cfg.t_len, d);
    for (int l = 0; l < cfg.layers; ++l)
        p.layers.push_back({Matrix::Zero(d, d), Matrix::Zero(2 * d, d), Matrix::Zero(2 * d, d), Matrix::Zero(d, d),
                            Matrix::Zero(1, d)});
    p.decoder = make_mlp(d, d, kDynamicWidth);
    p.metric_head = make_mlp(d, d, cfg.metric_dim);
    return p;
}

GraphRaeParams GraphRaeParams::init(const GraphRaeConfig& cfg, std::uint64_t seed) {
    GraphRaeParams p = zeros(cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> emb(-0.1, 0.1);
    p.for_each_block([&](const std::string& name, Matrix& m) {
        const bool is_bias = name.size() >= 3 && (name.ends_with(".b1") || name.ends_with(".b2"));
        if (is_bias || name.ends_with(".gate")) return;  // zero bias, gate starts at sigmoid(0) = 0.5
        if (name == "sem_emb" || name == "pos_emb") {
            for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = emb(rng);
            return;
        }
        xavier(m, rng);
    });
    return p;
}

GraphRaeParams GraphRaeParams::zeros_like() const {
    GraphRaeParams z = *this;
    z.for_each_block([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
}

std::size_t GraphRaeParams::parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

bool GraphRaeParams::all_finite() const {
    bool ok = true;
    for_each_block([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
}

Matrix mlp_forward(const MlpT<Matrix>& m, const Matrix& x) {
    Matrix h = ((x * m.w1).rowwise() + m.b1.row(0)).cwiseMax(0.0);
    return (h * m.w2).rowwise() + m.b2.row(0);
}

EncodedStates encode_features(const SceneGraph& g, const GraphRaeParams& p) {
    ad::Tape t;
    VarSet v = to_tape(t, p, false);
    Batch b = make_batch({&g}, p.t_len);
    Encoded enc = encode(t, v, b);
    return {t.value(enc.nodes), t.value(enc.edges)};
}

Matrix transformer_layer(const Matrix& node_states, const Matrix& edge_states, const SceneGraph& g,
                         const LayerT<Matrix>& layer, int heads) {
    if (node_states.rows() != static_cast<Eigen::Index>(g.nodes.size()) ||
        edge_states.rows() != static_cast<Eigen::Index>(g.edges.size()) || node_states.cols() != edge_states.cols())
        throw std::invalid_argument("dimension mismatch: states vs graph");
    ad::Tape t;
    LayerT<ad::Var> l{t.constant(layer.wq), t.constant(layer.wk), t.constant(layer.wv), t.constant(layer.wo),
                      t.constant(layer.gate)};
    ad::Index src, dst;
    for (const auto& e : g.edges) {
        src.push_back(e.src);
        dst.push_back(e.dst);
    }
    ad::Var out = layer_forward(t, l, t.constant(node_states), t.constant(edge_states), src, dst, heads);
    return t.value(out);
}

SceneEmbedding scene_embedding(const SceneGraph& g, const GraphRaeParams& p) {
    ad::Tape t;
    VarSet v = to_tape(t, p, false);
    Batch b = make_batch({&g}, p.t_len);
    Encoded enc = encode(t, v, b);
    Eigen::VectorXd ego = t.value(propagate(t, v, b, enc, p.heads)).row(b.ego[0]).transpose();
    const double norm = ego.norm();
    if (!(norm > kNormEps)) throw std::runtime_error("ego state has zero norm; parameters are degenerate");
    return {ego / norm};
}

std::vector<Matrix> reconstruct(const SceneGraph& g, const GraphRaeParams& p) {
    ad::Tape t;
    VarSet v = to_tape(t, p, false);
    Batch b = make_batch({&g}, p.t_len);
    Encoded enc = encode(t, v, b);
    const Matrix& pred = t.value(decode(t, v, b, propagate(t, v, b, enc, p.heads)));
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const int w = row_width(g.nodes[i].kind);
        const Eigen::RowVectorXd scale = node_feature_scale(g.nodes[i].kind);
        Matrix m = pred.block(static_cast<Eigen::Index>(i) * p.t_len, 0, p.t_len, w);
        for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) = m.row(r).cwiseQuotient(scale);
        out.push_back(std::move(m));
    }
    return out;
}

double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double loss_recon(const std::vector<Matrix>& pred, const std::vector<Matrix>& target, double delta) {
    if (pred.size() != target.size()) throw std::invalid_argument("reconstruction node count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].rows() != target[i].rows() || pred[i].cols() != target[i].cols())
            throw std::invalid_argument("reconstruction shape mismatch");
        for (Eigen::Index k = 0; k < pred[i].size(); ++k) total += huber(pred[i](k) - target[i](k), delta);
    }
    return total;
}

ContrastiveResult simclr(const Matrix& view_a, const Matrix& view_b, double tau) {
    if (!(tau > 0)) throw std::invalid_argument("temperature must be positive");
    if (view_a.rows() != view_b.rows() || view_a.cols() != view_b.cols())
        throw std::invalid_argument("SimCLR views must have equal shape");
    const Eigen::Index n = view_a.rows();
    ContrastiveResult r;
    r.grad_a = Matrix::Zero(n, view_a.cols());
    r.grad_b = Matrix::Zero(n, view_b.cols());
    if (n == 0) return r;
    const Matrix s = view_a * view_b.transpose() / tau;
    Matrix ds = Matrix::Zero(n, n);
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double mx = s.row(k).maxCoeff();
        Eigen::RowVectorXd e = (s.row(k).array() - mx).exp().matrix();
        const double z = e.sum();
        total += -(s(k, k) - mx - std::log(z));
        ds.row(k) = e / z;
        ds(k, k) -= 1.0;
    }
    ds /= static_cast<double>(n);
    r.value = total / static_cast<double>(n);
    r.grad_a = ds * view_b / tau;
    r.grad_b = ds.transpose() * view_a / tau;
    return r;
}

double loss_simclr(const Matrix& view_a, const Matrix& view_b, double tau) { return simclr(view_a, view_b, tau).value; }

ContrastiveResult supcon(const Matrix& z, const std::vector<int>& labels, double tau) {
    if (!(tau > 0)) throw std::invalid_argument("temperature must be positive");
    if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw std::invalid_argument("one label per embedding required");
    const Eigen::Index n = z.rows();
    ContrastiveResult r;
    r.grad_a = Matrix::Zero(n, z.cols());
    if (n == 0) return r;
    const Matrix s = z * z.transpose() / tau;
    Matrix ds = Matrix::Zero(n, n);
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        std::vector<Eigen::Index> pos;
        for (Eigen::Index m = 0; m < n; ++m)
            if (m != k && labels[static_cast<std::size_t>(m)] == labels[static_cast<std::size_t>(k)]) pos.push_back(m);
        if (pos.empty()) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index m = 0; m < n; ++m)
            if (m != k) mx = std::max(mx, s(k, m));
        double z_sum = 0.0;
        for (Eigen::Index m = 0; m < n; ++m)
            if (m != k) z_sum += std::exp(s(k, m) - mx);
        const double lse = mx + std::log(z_sum);
        const double inv_p = 1.0 / static_cast<double>(pos.size());
        for (Eigen::Index p : pos) {
            total += -(s(k, p) - lse) * inv_p;
            ds(k, p) -= inv_p;
        }
        for (Eigen::Index m = 0; m < n; ++m)
            if (m != k) ds(k, m) += std::exp(s(k, m) - lse);
    }
    ds /= static_cast<double>(n);
    r.value = total / static_cast<double>(n);
    r.grad_a = (ds + ds.transpose()) * z / tau;
    return r;
}

double loss_supcon(const Matrix& z, const std::vector<int>& labels, double tau) { return supcon(z, labels, tau).value; }

MetricLoss loss_metric(const Matrix& z, const std::vector<std::optional<Eigen::VectorXd>>& metrics,
                       const MlpT<Matrix>& head) {
    if (static_cast<Eigen::Index>(metrics.size()) != z.rows()) throw std::invalid_argument("one metric slot per embedding required");
    MetricLoss out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = i + 1; j < z.rows(); ++j) {
            const auto& mi = metrics[static_cast<std::size_t>(i)];
            const auto& mj = metrics[static_cast<std::size_t>(j)];
            if (!mi || !mj) continue;
            Matrix feat = (z.row(i) - z.row(j)).cwiseAbs();
            Eigen::RowVectorXd pred = mlp_forward(head, feat).row(0);
            total += (pred - (*mi - *mj).cwiseAbs().transpose()).squaredNorm();
            ++out.valid_pairs;
        }
    if (out.valid_pairs > 0) out.value = total / out.valid_pairs;
    return out;
}

SceneGraph rigid_transform(const SceneGraph& g, double dx, double dy, double angle) {
    SceneGraph out = g;
    const double c = std::cos(angle), s = std::sin(angle);
    for (auto& n : out.nodes)
        for (Eigen::Index t = 0; t < n.sequence.rows(); ++t) {
            const double x = n.sequence(t, 0), y = n.sequence(t, 1);
            n.sequence(t, 0) = c * x - s * y + dx;
            n.sequence(t, 1) = s * x + c * y + dy;
            n.sequence(t, 2) = wrap_angle(n.sequence(t, 2) + angle);
        }
    rebuild_edge_features(out);
    return out;
}

SceneGraph Augmenter::operator()(const SceneGraph& g) {
    std::uniform_real_distribution<double> tr(-max_translation_, max_translation_);
    std::uniform_real_distribution<double> rot(-max_rotation_, max_rotation_);
    const double dx = tr(rng_);
    const double dy = tr(rng_);
    const double a = rot(rng_);
    return rigid_transform(g, dx, dy, a);
}

TrainingBatch make_training_batch(const Dataset& d, const std::vector<std::string>& ids) {
    TrainingBatch b;
    int unlabeled = 0;
    for (const auto& id : ids) {
        b.graphs.push_back(&d.graphs.at(id));
        if (auto it = d.labels.find(id); it != d.labels.end())
            b.labels.push_back(it->second.joint());
        else
            b.labels.push_back(-1 - unlabeled++);  // never matches another scene
        if (auto it = d.metrics.find(id); it != d.metrics.end())
            b.metrics.emplace_back(it->second.as_vector());
        else
            b.metrics.emplace_back(std::nullopt);
    }
    return b;
}

LossBreakdown total_loss(const TrainingBatch& batch, const GraphRaeParams& p, const GraphRaeConfig& cfg,
                         Augmenter& augmenter) {
    if (cfg.lambda < 0) throw std::invalid_argument("lambda must be non-negative");
    ad::Tape t;
    VarSet v = to_tape(t, p, false);
    ViewPair views = make_views(batch, augmenter);
    LossBreakdown out;
    build_loss(t, v, p, cfg, batch, views, out);
    return out;
}

LossGradient loss_gradient(const TrainingBatch& batch, const GraphRaeParams& p, const GraphRaeConfig& cfg,
                           Augmenter& augmenter) {
    if (cfg.lambda < 0) throw std::invalid_argument("lambda must be non-negative");
    ad::Tape t;
    VarSet v = to_tape(t, p, true);
    ViewPair views = make_views(batch, augmenter);
    LossGradient out{{}, p.zeros_like()};
    ad::Var total = build_loss(t, v, p, cfg, batch, views, out.loss);
    t.backward(total);
    zip_blocks(out.grad, v, [&](const std::string& name, Matrix& g, ad::Var& var) {
        const Matrix& tg = t.grad(var);
        if (tg.size() != 0) g = tg;
        if (!g.allFinite()) throw std::runtime_error("non-finite gradient in parameter block '" + name + "'");
    });
    return out;
}

TrainResult train(const Dataset& d, const GraphRaeConfig& cfg) {
    if (d.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");
    TrainResult r{GraphRaeParams::init(cfg, cfg.seed), {}};
    std::vector<std::string> order = d.ids();
    std::sort(order.begin(), order.end());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(order.begin(), order.end(), rng);
    Augmenter aug(cfg.seed + 1, cfg.max_translation, cfg.max_rotation);
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.batch_size, 1)), order.size());
    std::size_t cursor = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        if (cursor + bs > order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        std::vector<std::string> ids(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + bs));
        cursor += bs;
        LossGradient lg;
        try {
            lg = loss_gradient(make_training_batch(d, ids), r.params, cfg, aug);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("Graph-RAE training diverged at step " + std::to_string(step) + " (" + e.what() +
                                     "); try a smaller learning_rate");
        }
        if (!std::isfinite(lg.loss.total))
            throw std::runtime_error("Graph-RAE training diverged at step " + std::to_string(step) +
                                     " (loss is not finite); try a smaller learning_rate");
        zip_blocks(r.params, lg.grad,
                   [&](const std::string&, Matrix& w, Matrix& g) { w -= cfg.learning_rate * g; });
        r.history.push_back(lg.loss);
    }
    return r;
}

EmbeddingTable embed_dataset(const Dataset& d, const GraphRaeParams& p, int batch_size) {
    EmbeddingTable out;
    const std::size_t bs = static_cast<std::size_t>(std::max(batch_size, 1));
    for (std::size_t start = 0; start < d.tokens.size(); start += bs) {
        const std::size_t end = std::min(start + bs, d.tokens.size());
        std::vector<const SceneGraph*> gs;
        for (std::size_t i = start; i < end; ++i) gs.push_back(&d.graphs.at(d.tokens[i].id));
        ad::Tape t;
        VarSet v = to_tape(t, p, false);
        Batch b = make_batch(gs, p.t_len);
        Encoded enc = encode(t, v, b);
        const Matrix& h = t.value(propagate(t, v, b, enc, p.heads));
        for (std::size_t i = start; i < end; ++i) {
            Eigen::VectorXd ego = h.row(b.ego[i - start]).transpose();
            const double norm = ego.norm();
            if (!(norm > kNormEps))
                throw std::runtime_error("ego state has zero norm for token " + d.tokens[i].id);
            out[d.tokens[i].id] = ego / norm;
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'G', 'R', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated Graph-RAE parameter file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

// Layout: "GRAE", u32 version, u32 d, heads, t_len, metric_dim, layers, then
// per block u32 rows, u32 cols and rows*cols little-endian f32 (row-major).
void save_params(const GraphRaeParams& p, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    for (int v : {p.d, p.heads, p.t_len, p.metric_dim, static_cast<int>(p.layers.size())}) put_u32(os, static_cast<std::uint32_t>(v));
    p.for_each_block([&](const std::string&, const Matrix& m) {
        put_u32(os, static_cast<std::uint32_t>(m.rows()));
        put_u32(os, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const float f = static_cast<float>(m(r, c));
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32(os, bits);
            }
    });
}

GraphRaeParams load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path.string() + ": not a Graph-RAE parameter file");
    if (get_u32(is) != kVersion) throw std::runtime_error(path.string() + ": unsupported parameter file version");
    GraphRaeConfig cfg;
    cfg.d = static_cast<int>(get_u32(is));
    cfg.heads = static_cast<int>(get_u32(is));
    cfg.t_len = static_cast<int>(get_u32(is));
    cfg.metric_dim = static_cast<int>(get_u32(is));
    cfg.layers = static_cast<int>(get_u32(is));
    GraphRaeParams p = GraphRaeParams::zeros(cfg);
    p.for_each_block([&](const std::string& name, Matrix& m) {
        const auto rows = static_cast<Eigen::Index>(get_u32(is));
        const auto cols = static_cast<Eigen::Index>(get_u32(is));
        if (rows != m.rows() || cols != m.cols()) throw std::runtime_error(path.string() + ": block shape mismatch at " + name);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                const std::uint32_t bits = get_u32(is);
                float f;
                std::memcpy(&f, &bits, 4);
                m(r, c) = f;
            }
    });
    return p;
}

}  // namespace autoscale::rae
