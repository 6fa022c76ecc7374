#pragma once
// Small closed loop: procedural driving scenes grouped into hidden
// archetypes and a ground-truth mixture-response oracle standing in for
// planner training plus closed-loop evaluation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "autoscale/cluster_ga.hpp"
#include "autoscale/scene.hpp"

namespace autoscale {

// Trained-policy handle returned by an oracle. Opaque to the engine beyond
// the training set it was built from.
struct PolicyHandle {
    std::vector<std::string> training;  // sorted token ids
    std::uint64_t key = 0;              // hash of the training set
};

class PolicyOracle {
public:
    virtual ~PolicyOracle() = default;
    virtual PolicyHandle train(const std::vector<std::string>& training) = 0;
    // Per-scene scores in [0,1] for every calibration token.
    virtual std::map<std::string, double> evaluate(const PolicyHandle& h, const Dataset& cal) = 0;
};

std::uint64_t hash_token_set(const std::vector<std::string>& sorted_ids);

// Derives an independent stream seed from a base seed and a tag.
std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag);

}  // namespace autoscale

namespace autoscale::sim {

enum class Archetype : std::uint8_t {
    Cruise,
    DenseFollow,
    LaneChange,
    LeftTurn,
    RightTurn,
    StopAtCrossing,
    Roundabout,
    UTurn,
};
inline constexpr int kArchetypeCount = 8;
std::string_view to_string(Archetype a);

struct WorldSpec {
    int archetypes = kArchetypeCount;
    int n_real = 800;
    int n_pool = 4000;
    int n_cal = 400;
    // Relative share of each archetype in the real set (normalized).
    std::vector<double> real_share;
    // Response: s_k = clip(a_k + sum_j T_kj b_j log(1 + m_j / m0_j) + g r_k, 0, 1).
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> m0;
    double g = -0.03;
    Eigen::MatrixXd transfer;
    double noise_sigma = 0.1;
    int draws = 10;
    std::uint64_t seed = 0;

    // Fills empty fields with the built-in defaults for `archetypes`.
    void complete();
    void validate() const;
};

WorldSpec default_world_spec(std::uint64_t seed);
WorldSpec read_world_spec(const std::filesystem::path& path);

// Hidden ground truth. Only the oracle reads archetype_of.
struct World {
    WorldSpec spec;
    Dataset real;
    Dataset pool;
    Dataset cal;
    std::unordered_map<std::string, int> archetype_of;
};

World generate_world(const WorldSpec& spec);

// One procedurally generated scene of a given archetype.
SceneGraph make_scene(Archetype a, std::mt19937_64& rng, SemanticLabels& labels, SubscoreVector& metrics);

class GroundTruthOracle : public PolicyOracle {
public:
    explicit GroundTruthOracle(std::shared_ptr<const World> world);
    GroundTruthOracle(std::shared_ptr<const World> world, WorldSpec response);

    PolicyHandle train(const std::vector<std::string>& training) override;
    std::map<std::string, double> evaluate(const PolicyHandle& h, const Dataset& cal) override;

    // Noise-free per-archetype response for a training set.
    Eigen::VectorXd archetype_scores(const std::vector<std::string>& training) const;
    const WorldSpec& response() const { return response_; }

private:
    std::shared_ptr<const World> world_;
    WorldSpec response_;
};

// Two response specs over the same world whose weak archetypes are disjoint.
std::pair<WorldSpec, WorldSpec> oracle_pair_specs(const WorldSpec& base);

// Cluster-level transfer experiment: random mixtures over `rounds` rounds on
// K clusters whose hidden transfer follows centroid geometry. Returns the
// round history plus the engine-side similarity matrix and counts.
struct TransferHistory {
    std::vector<RoundObservation> history;
    Eigen::MatrixXd r;
    Eigen::VectorXd n0;
    double n_total = 0;
};
TransferHistory transfer_history(std::uint64_t seed, int k = 8, int rounds = 8, double sigma = 0.5);

}  // namespace autoscale::sim
