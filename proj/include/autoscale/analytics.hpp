#pragma once
// Embedding-space machinery: PCA, diagonal GMM clustering, cluster
// similarity, calibration mixture and per-cluster score aggregation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "autoscale/io.hpp"

namespace autoscale {

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;  // n x d, orthonormal rows
    Eigen::VectorXd variances;   // per component, descending
    int n = 0;
};

// Rows of x are samples. Throws std::invalid_argument on bad sizes and
// std::runtime_error when the data has rank below n.
PcaModel pca_fit(const Eigen::MatrixXd& x, int n);
Eigen::VectorXd pca_transform(const PcaModel& m, const Eigen::VectorXd& v);
Eigen::MatrixXd pca_transform_rows(const PcaModel& m, const Eigen::MatrixXd& x);

struct GmmOptions {
    int max_iter = 100;
    double tol = 1e-5;
    double var_floor = 1e-6;
};

struct ClusterModel {
    int k = 0;
    Eigen::MatrixXd means;      // k x p
    Eigen::MatrixXd variances;  // k x p, diagonal covariances
    Eigen::VectorXd weights;    // k
    Eigen::MatrixXd centroids;  // k x p, unit-norm means
    std::vector<std::int64_t> n0;
    Eigen::VectorXd pi;

    // Reduction applied to raw embeddings before the mixture (absent when
    // clustering happens in the input space).
    std::optional<PcaModel> pca;

    std::vector<double> log_likelihood;  // mean per-sample, one per EM iteration
    std::vector<int> reseeded;           // components reseeded from the farthest point
};

// EM on rows of x (already unit-norm), k-means++ init under seed.
ClusterModel gmm_fit(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const GmmOptions& opt = {});

// Argmax posterior responsibility of a point in model space.
int assign(const ClusterModel& m, const Eigen::VectorXd& v);
Eigen::VectorXd responsibilities(const ClusterModel& m, const Eigen::VectorXd& v);

// Raw embedding -> model space (normalize, optional PCA, renormalize).
Eigen::VectorXd to_model_space(const ClusterModel& m, const Eigen::VectorXd& raw);
int assign_embedding(const ClusterModel& m, const Eigen::VectorXd& raw);
std::map<std::string, int> assign_table(const ClusterModel& m, const EmbeddingTable& t);

// Full pipeline over real-token embeddings; fills n0 from the fitted assignment.
ClusterModel fit_clusters(const EmbeddingTable& real, int k, std::uint64_t seed, int pca_dim = 64,
                          const GmmOptions& opt = {});

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x);

struct SimilarityMatrix {
    Eigen::MatrixXd r;
    double sigma = 0.5;
};

SimilarityMatrix rbf_similarity(const Eigen::MatrixXd& centroids, double sigma);

struct ClusterScores {
    Eigen::VectorXd s_bar;
    std::vector<int> counts;
    std::vector<bool> missing;
};

// Share of calibration tokens per cluster. Throws on an empty set.
Eigen::VectorXd calibration_mixture(const std::vector<int>& cluster_of_cal, int k);
ClusterScores aggregate_scores(const std::map<std::string, double>& scores, const std::map<std::string, int>& cluster_ids,
                               int k);
// Missing clusters are skipped (their pi share is zero by construction).
double overall_score(const Eigen::VectorXd& pi, const ClusterScores& s);
double overall_score(const Eigen::VectorXd& pi, const Eigen::VectorXd& s_bar);

nlohmann::json to_json(const ClusterModel& m);
ClusterModel cluster_model_from_json(const nlohmann::json& j);
void write_cluster_model(const ClusterModel& m, const std::filesystem::path& path);
ClusterModel read_cluster_model(const std::filesystem::path& path);
void write_assignments_csv(const std::map<std::string, int>& a, const std::filesystem::path& path);
std::map<std::string, int> read_assignments_csv(const std::filesystem::path& path);

}  // namespace autoscale
