#pragma once
// The round loop: baseline round, token-level retrieval round, then
// predictor-guided mixture updates; baselines run a single selection round.
// Rounds append to a JSONL log from which a run can be resumed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "autoscale/analytics.hpp"
#include "autoscale/cluster_ga.hpp"
#include "autoscale/graph_rae.hpp"
#include "autoscale/harness.hpp"
#include "autoscale/io.hpp"
#include "autoscale/retrieval.hpp"

namespace autoscale {

inline constexpr int kRoundLogSchema = 1;

enum class Method { AutoScale, Uniform, Iwr, Chameleon };
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct EmbeddingConfig {
    int dim = 16;
    int layers = 1;
    int heads = 2;
    int steps = 30;
    int batch_size = 16;
    double learning_rate = 2e-3;
    double lambda = 5.0;
};

struct EngineConfig {
    std::int64_t budget = 500;
    int rounds = 5;
    int clusters = 8;
    double sigma = 0.5;
    double lambda_reg = 1.0;
    double eps_max = 0.1;
    std::uint64_t seed = 0;
    Method method = Method::AutoScale;

    int pca_dim = 64;
    double lambda_c = 0.1;
    int feasible_samples = 64;
    AnchorPolicy anchors;
    EmbeddingConfig embedding;

    void validate() const;
    nlohmann::json to_json() const;
};

// Everything the loop needs that does not change across rounds: embeddings,
// the cluster model fitted on real data, per-pool assignments and counts.
struct Workspace {
    const Dataset* real = nullptr;
    const Dataset* pool = nullptr;
    const Dataset* cal = nullptr;
    EmbeddingTable emb_real, emb_pool, emb_cal;
    ClusterModel model;
    std::map<std::string, int> cl_real, cl_pool, cl_cal;
    SimilarityMatrix r;
    Eigen::VectorXd n0;
    Eigen::VectorXd pool_counts;
    Eigen::VectorXd pi;

    int k() const { return model.k; }
    double n0_total() const { return n0.sum(); }
};

// Graph-RAE trained on the real set with the engine's embedding settings.
rae::GraphRaeParams train_encoder(const Dataset& real, const EngineConfig& cfg);

// Trains the scene encoder on the real set, embeds every pool and fits the
// clusters. Throws std::invalid_argument when the pools are invalid.
Workspace prepare(const Dataset& real, const Dataset& pool, const Dataset& cal, const EngineConfig& cfg);

// Same, from precomputed embeddings.
Workspace prepare_from_embeddings(const Dataset& real, const Dataset& pool, const Dataset& cal, EmbeddingTable emb_real,
                                  EmbeddingTable emb_pool, EmbeddingTable emb_cal, const EngineConfig& cfg);

struct RoundRecord {
    int round = 0;
    std::string method;
    Eigen::VectorXd mixture;         // realized w
    Eigen::VectorXd cluster_scores;  // NaN where missing
    std::vector<bool> missing;
    double overall = 0.0;
    std::vector<std::string> selected;
    std::vector<std::int64_t> realized_counts;  // selected tokens per cluster
    std::optional<PredictorParams> predictor;
    std::optional<Eigen::VectorXd> gains;
    std::optional<Eigen::VectorXd> target_mixture;
    std::optional<std::vector<std::int64_t>> delta;
    std::optional<double> eps;
    std::optional<int> warm_start;
    std::optional<std::string> feasible;
    bool uniform_fallback = false;
    bool shortfall = false;
    double timing = 0.0;  // seconds; kept out of the JSON log

    RoundObservation observation() const;
};

nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_record_from_json(const nlohmann::json& j);

// One compact JSON object per line.
std::string round_log_line(const RoundRecord& r);
// Throws ParseError naming the offending line.
std::vector<RoundRecord> read_round_log(const std::filesystem::path& path);

struct RunOutputs {
    std::optional<std::filesystem::path> log;     // appended one line per round
    std::optional<std::filesystem::path> timing;  // round,seconds CSV
    int stop_after = -1;                          // stop once this round is logged
};

class InsufficientHistory : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mixture update for round t >= 2 from the rounds logged so far.
struct MixtureStep {
    int warm_start = 0;
    Eigen::VectorXd w_prev;
    PredictorParams predictor;
    Eigen::VectorXd gradient;
    double eps = 0.0;
    bool step_reached = true;
    Eigen::VectorXd target;
    std::string feasible;
    std::vector<std::int64_t> delta;
    Eigen::VectorXd gains;
};
// Throws InsufficientHistory with fewer than two rounds.
MixtureStep mixture_step(const Workspace& ws, const std::vector<RoundRecord>& history, const EngineConfig& cfg, int t);

// Selection of a baseline method for round t.
Selection baseline_selection(const Workspace& ws, const EngineConfig& cfg, int t);

std::vector<RoundRecord> run(const Workspace& ws, PolicyOracle& oracle, const EngineConfig& cfg,
                             const RunOutputs& out = {});

// Continues a run from its log, appending the remaining rounds. Per-scene
// scores of the last logged round are recomputed through the oracle.
std::vector<RoundRecord> resume(const Workspace& ws, PolicyOracle& oracle, const EngineConfig& cfg,
                                const std::filesystem::path& log, const RunOutputs& out = {});

// Evaluates a fixed training set; returns the overall score and per-cluster scores.
struct Evaluation {
    std::map<std::string, double> scene_scores;
    ClusterScores clusters;
    double overall = 0.0;
};
Evaluation evaluate_training_set(const Workspace& ws, PolicyOracle& oracle, const std::vector<std::string>& added);

struct SwapResult {
    double jaccard = 1.0;
    // table(i, j): oracle i trained on the final selection of run j.
    Eigen::Matrix2d table;
    std::vector<RoundRecord> run_a, run_b;
};

SwapResult swap_experiment(const Workspace& ws, PolicyOracle& a, PolicyOracle& b, const EngineConfig& cfg);

}  // namespace autoscale
