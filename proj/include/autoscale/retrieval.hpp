#pragma once
// Token-level synthetic sample selection: low-scoring calibration anchors,
// priority scoring against synthetic candidates, global top-B ranking.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autoscale/io.hpp"

namespace autoscale {

struct Anchor {
    std::string token;
    int cluster = 0;
    double score = 0.0;
    Eigen::VectorXd embedding;
};

struct AnchorPolicy {
    int max_per_cluster = 32;
    double threshold = 0.5;
};

// Per cluster, the lowest-scoring calibration scenes with score <= threshold,
// capped at max_per_cluster; ties broken by token id. Output is ordered by
// cluster, then score, then id.
std::vector<Anchor> select_anchors(const std::map<std::string, double>& scores, const std::map<std::string, int>& clusters,
                                   const EmbeddingTable& cal_embeddings, const AnchorPolicy& policy = {});

// (1 + alpha) (1 - score) max(cos, 0)
double priority_value(double alpha, double score, double cosine);
double priority(const Anchor& a, const Eigen::VectorXd& candidate, const Eigen::VectorXd& alpha);

struct RankedCandidate {
    std::string token;
    double priority = 0.0;
    std::string best_anchor;
    int anchor_cluster = -1;
};

struct Selection {
    std::vector<RankedCandidate> ranked;  // descending priority, ties by token id
    bool shortfall = false;               // pool smaller than the budget
    bool uniform_fallback = false;        // no anchors, uniform draw instead
    std::string method = "autoscale";

    std::vector<std::string> tokens() const;
};

// Candidate priority is the max over anchors; exactly min(budget, pool)
// unique tokens come back. seed only matters for the uniform fallback.
Selection retrieve(const std::vector<Anchor>& anchors, const EmbeddingTable& pool, const Eigen::VectorXd& alpha,
                   std::int64_t budget, std::uint64_t seed = 0);

// Seeded uniform draw of min(budget, pool) tokens.
Selection uniform_selection(const EmbeddingTable& pool, std::int64_t budget, std::uint64_t seed);
Selection uniform_selection(const std::vector<std::string>& pool_ids, std::int64_t budget, std::uint64_t seed);

// rank, token_id, priority, best_anchor_id, anchor_cluster, method
void write_selection_csv(const Selection& s, const std::filesystem::path& path);

}  // namespace autoscale
