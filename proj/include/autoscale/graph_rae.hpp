#pragma once
// Graph regularized autoencoder: encodes a heterogeneous spatio-temporal scene
// graph into a unit-norm ego embedding, reconstructs every node polyline, and
// regularizes the embedding space with SimCLR, SupCon and pairwise metric
// regression terms.

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autoscale/autodiff.hpp"
#include "autoscale/io.hpp"
#include "autoscale/scene.hpp"

namespace autoscale::rae {

using Matrix = Eigen::MatrixXd;

// Linear -> ReLU -> Linear. Biases are 1 x n rows.
template <class T>
struct MlpT {
    T w1, b1, w2, b2;
};

// One gated graph-transformer layer. Keys and values are projected from
// [neighbor state | incoming edge state] (2d wide).
template <class T>
struct LayerT {
    T wq, wk, wv, wo, gate;
};

template <class T>
struct ParamSet {
    MlpT<T> node_dyn;  // 5 -> d -> d
    MlpT<T> node_map;  // 4 -> d -> d
    MlpT<T> edge;      // 4 -> d -> d
    T sem_emb;         // kNodeKindCount x d
    T pos_emb;         // t_len x d
    std::vector<LayerT<T>> layers;
    MlpT<T> decoder;      // d -> d -> 5
    MlpT<T> metric_head;  // d -> d -> metric_dim
};

// Visits matching blocks of two parameter sets in a fixed order.
template <class A, class B, class F>
void zip_blocks(ParamSet<A>& a, ParamSet<B>& b, F&& f) {
    auto mlp = [&](const std::string& n, auto& x, auto& y) {
        f(n + ".w1", x.w1, y.w1);
        f(n + ".b1", x.b1, y.b1);
        f(n + ".w2", x.w2, y.w2);
        f(n + ".b2", x.b2, y.b2);
    };
    mlp("node_dyn", a.node_dyn, b.node_dyn);
    mlp("node_map", a.node_map, b.node_map);
    mlp("edge", a.edge, b.edge);
    f(std::string("sem_emb"), a.sem_emb, b.sem_emb);
    f(std::string("pos_emb"), a.pos_emb, b.pos_emb);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const std::string n = "layers." + std::to_string(l);
        f(n + ".wq", a.layers[l].wq, b.layers[l].wq);
        f(n + ".wk", a.layers[l].wk, b.layers[l].wk);
        f(n + ".wv", a.layers[l].wv, b.layers[l].wv);
        f(n + ".wo", a.layers[l].wo, b.layers[l].wo);
        f(n + ".gate", a.layers[l].gate, b.layers[l].gate);
    }
    mlp("decoder", a.decoder, b.decoder);
    mlp("metric_head", a.metric_head, b.metric_head);
}

struct GraphRaeConfig {
    int d = 128;
    int heads = 4;
    int layers = 2;
    int t_len = 12;
    int metric_dim = SubscoreVector::kSize;

    double lambda = 5.0;
    double tau = 0.1;
    double huber_delta = 1.0;

    // Rigid view augmentation.
    double max_translation = 2.0;
    double max_rotation = std::numbers::pi / 6.0;

    // Plain gradient descent.
    double learning_rate = 1e-2;
    int steps = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

struct GraphRaeParams : ParamSet<Matrix> {
    int d = 0;
    int heads = 0;
    int t_len = 0;
    int metric_dim = 0;

    static GraphRaeParams init(const GraphRaeConfig& cfg, std::uint64_t seed);
    static GraphRaeParams zeros(const GraphRaeConfig& cfg);
    GraphRaeParams zeros_like() const;

    std::size_t parameter_count() const;
    bool all_finite() const;

    template <class F>
    void for_each_block(F&& f) {
        zip_blocks(*this, *this, [&](const std::string& n, Matrix& x, Matrix&) { f(n, x); });
    }
    template <class F>
    void for_each_block(F&& f) const {
        auto& self = const_cast<GraphRaeParams&>(*this);
        zip_blocks(self, self, [&](const std::string& n, const Matrix& x, const Matrix&) { f(n, x); });
    }
};

struct SceneEmbedding {
    Eigen::VectorXd v;
};

struct LossBreakdown {
    double recon = 0;
    double simclr = 0;
    double supcon = 0;
    double metric = 0;
    double total = 0;
    double lambda = 0;
    int metric_pairs = 0;
};

// Fixed scaling applied to raw features before encoding and in the
// reconstruction target: positions / 10 m, curvature * 10, speed / 10 m/s.
Eigen::RowVectorXd node_feature_scale(NodeKind kind);
Eigen::RowVectorXd edge_feature_scale();

struct EncodedStates {
    Matrix node_states;  // n_nodes x d
    Matrix edge_states;  // n_edges x d
};

EncodedStates encode_features(const SceneGraph& g, const GraphRaeParams& p);

Matrix transformer_layer(const Matrix& node_states, const Matrix& edge_states, const SceneGraph& g,
                         const LayerT<Matrix>& layer, int heads);

// Throws std::runtime_error when the ego state has zero norm.
SceneEmbedding scene_embedding(const SceneGraph& g, const GraphRaeParams& p);

// Per-node predicted sequences in raw feature units (t_len x row_width).
std::vector<Matrix> reconstruct(const SceneGraph& g, const GraphRaeParams& p);

double huber(double residual, double delta);
double loss_recon(const std::vector<Matrix>& pred, const std::vector<Matrix>& target, double delta = 1.0);

struct ContrastiveResult {
    double value = 0;
    Matrix grad_a;  // d loss / d first argument
    Matrix grad_b;  // d loss / d second argument (SimCLR only)
};

// Rows of view_a and view_b are the two augmented embeddings of each scene.
// Anchor k (view a) is contrasted against view b of every scene.
ContrastiveResult simclr(const Matrix& view_a, const Matrix& view_b, double tau);
double loss_simclr(const Matrix& view_a, const Matrix& view_b, double tau);

// labels[k] is a joint semantic label; anchors without positives are skipped
// and the sum is divided by the batch size.
ContrastiveResult supcon(const Matrix& embeddings, const std::vector<int>& labels, double tau);
double loss_supcon(const Matrix& embeddings, const std::vector<int>& labels, double tau);

struct MetricLoss {
    double value = 0;
    int valid_pairs = 0;
};

// Mean over unordered pairs with both metric vectors present of the squared
// error between the head's prediction from |z_i - z_j| and |m_i - m_j|.
MetricLoss loss_metric(const Matrix& embeddings, const std::vector<std::optional<Eigen::VectorXd>>& metrics,
                       const MlpT<Matrix>& head);

Matrix mlp_forward(const MlpT<Matrix>& m, const Matrix& x);

// Produces rigidly transformed copies of scenes (random translation and
// rotation of all polylines, edges recomputed).
class Augmenter {
public:
    Augmenter(std::uint64_t seed, double max_translation, double max_rotation)
        : rng_(seed), max_translation_(max_translation), max_rotation_(max_rotation) {}
    SceneGraph operator()(const SceneGraph& g);

private:
    std::mt19937_64 rng_;
    double max_translation_;
    double max_rotation_;
};

SceneGraph rigid_transform(const SceneGraph& g, double dx, double dy, double angle);

struct TrainingBatch {
    std::vector<const SceneGraph*> graphs;
    std::vector<int> labels;
    std::vector<std::optional<Eigen::VectorXd>> metrics;
};

TrainingBatch make_training_batch(const Dataset& d, const std::vector<std::string>& ids);

LossBreakdown total_loss(const TrainingBatch& batch, const GraphRaeParams& p, const GraphRaeConfig& cfg,
                         Augmenter& augmenter);

struct LossGradient {
    LossBreakdown loss;
    GraphRaeParams grad;
};

// Throws std::runtime_error naming the block when any gradient entry is not finite.
LossGradient loss_gradient(const TrainingBatch& batch, const GraphRaeParams& p, const GraphRaeConfig& cfg,
                           Augmenter& augmenter);

struct TrainResult {
    GraphRaeParams params;
    std::vector<LossBreakdown> history;
};

TrainResult train(const Dataset& d, const GraphRaeConfig& cfg);

EmbeddingTable embed_dataset(const Dataset& d, const GraphRaeParams& p, int batch_size = 128);

void save_params(const GraphRaeParams& p, const std::filesystem::path& path);
GraphRaeParams load_params(const std::filesystem::path& path);

}  // namespace autoscale::rae
