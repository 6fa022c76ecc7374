#pragma once
// Reference selectors sharing the retrieval Selection interface: uniform,
// importance-weighted retrieval (KDE density ratio) and Chameleon
// (leverage-score cluster allocation).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autoscale/io.hpp"
#include "autoscale/retrieval.hpp"

namespace autoscale {

Selection uniform_select(const EmbeddingTable& pool, std::int64_t budget, std::uint64_t seed);

struct IwrOptions {
    int dims = 16;
    // Bandwidth override; by default both KDEs use h = N0^(-1/(n+4)).
    std::optional<double> bandwidth;
    // Give the synthetic KDE its own sample count in the bandwidth rule.
    bool own_count_bandwidth = false;
    double clip = 100.0;
};

double scott_bandwidth(double n_samples, int dims);

// Log density of an isotropic product-Gaussian KDE at each query row.
Eigen::VectorXd kde_log_density(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& queries, double h);

// Clipped log p_real - log p_syn for every synthetic token.
std::map<std::string, double> iwr_log_weights(const EmbeddingTable& real, const EmbeddingTable& syn,
                                              const IwrOptions& opt = {});
Selection iwr_select(const EmbeddingTable& real, const EmbeddingTable& syn, std::int64_t budget,
                     const IwrOptions& opt = {});

// gamma_k = [R (R + K lambda I)^-1]_kk with R = C C^T over unit-norm rows.
Eigen::VectorXd leverage_scores(const Eigen::MatrixXd& centroids, double lambda_c);

// Softmax of 1/gamma.
Eigen::VectorXd chameleon_weights(const Eigen::VectorXd& gamma);

// round(w_k B) then unit adjustments by fractional residual (largest first,
// ties by cluster index) until the sum is B.
std::vector<std::int64_t> chameleon_budgets(const Eigen::VectorXd& weights, std::int64_t budget);

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& v);

struct ChameleonResult {
    Selection selection;
    Eigen::VectorXd gamma;
    Eigen::VectorXd weights;
    std::vector<std::int64_t> budgets;
    std::int64_t filled = 0;  // tokens drawn outside their cluster to cover shortfalls
};

// pool_clusters maps each synthetic token to its nearest centroid.
ChameleonResult chameleon_select(const Eigen::MatrixXd& centroids, const std::map<std::string, int>& pool_clusters,
                                 std::int64_t budget, double lambda_c = 0.1, std::uint64_t seed = 0);

}  // namespace autoscale
