#pragma once
// Cluster-aware gradient ascent over the data mixture: the pairwise
// surrogate predictor, its ridge fit, the calibrated exponentiated-gradient
// step, feasibility repair, augmentation sizes and per-cluster gains.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace autoscale {

// Floor applied to mixture entries before any log or division.
inline constexpr double kMixtureFloor = 1e-6;

// Throws std::invalid_argument unless w is strictly positive and sums to 1.
void check_mixture(const Eigen::VectorXd& w, const char* what = "mixture");

// r_j = max(0, 1 - n0_j / (w_j N)).
Eigen::VectorXd synthetic_ratio(const Eigen::VectorXd& w, const Eigen::VectorXd& n0, double n_total);

struct PredictorParams {
    Eigen::VectorXd beta;
    double gamma = 0.0;
    double lambda_reg = 1.0;
};

// One evaluated round. Clusters flagged missing produce no regression rows.
struct RoundObservation {
    Eigen::VectorXd w;
    Eigen::VectorXd s_bar;
    std::vector<bool> missing;
};

struct PairSample {
    int round_a = 0;
    int round_b = 0;
    int cluster = 0;
    Eigen::VectorXd features;  // K beta columns then the gamma column
    double target = 0.0;
    double weight = 1.0;
};

// All unordered round pairs (a < b), one row per cluster observed in both.
// recency_tau > 0 weights a pair by exp(-(t_latest - b) / recency_tau).
std::vector<PairSample> build_pairs(const std::vector<RoundObservation>& history, const Eigen::MatrixXd& r,
                                    const Eigen::VectorXd& n0, double n_total, double recency_tau = 0.0);

// Weighted ridge solution, factorized with LDLT.
PredictorParams fit_predictor(const std::vector<PairSample>& pairs, int k, double lambda_reg = 1.0);

Eigen::VectorXd predict_delta(const PredictorParams& p, const Eigen::MatrixXd& r, const Eigen::VectorXd& w_from,
                              const Eigen::VectorXd& w_to, const Eigen::VectorXd& n0, double n_total);

// Gradient of the surrogate overall score with respect to log w.
Eigen::VectorXd gradient(const PredictorParams& p, const Eigen::MatrixXd& r, const Eigen::VectorXd& pi,
                         const Eigen::VectorXd& w, const Eigen::VectorXd& n0, double n_total);

// eps_max * (1 + cos(pi (t - 2) / (T - 1))) / 2 for 2 <= t <= T.
double half_cosine_schedule(int t, int rounds, double eps_max);

struct EgResult {
    Eigen::VectorXd w;
    double eta = 0.0;
    bool reached = true;  // false when the step length hit the bisection cap
};

EgResult eg_update(const Eigen::VectorXd& w_prev, const Eigen::VectorXd& g, double eps, double eta_cap = 1e3,
                   int iterations = 100);

struct MixtureBounds {
    Eigen::VectorXd lower;  // n0_k / N
    Eigen::VectorXd upper;  // (n0_k + pool_k) / N, relaxed to 1 when the pool cannot fill the budget
    bool relaxed = false;
};

MixtureBounds mixture_bounds(const Eigen::VectorXd& n0, const Eigen::VectorXd& pool, double n_total);
bool is_feasible(const Eigen::VectorXd& w, const MixtureBounds& b, double tol = 1e-12);

// Clip to bounds, then move the leftover mass proportionally among entries
// that still have room, until the sum is 1.
Eigen::VectorXd project_feasible(const Eigen::VectorXd& w, const MixtureBounds& b);

enum class FeasibleMethod { Identity, Perturbed, Projection };

struct FeasibleResult {
    Eigen::VectorXd w;
    FeasibleMethod method = FeasibleMethod::Identity;
};

struct SurrogateContext {
    const PredictorParams* params = nullptr;
    const Eigen::MatrixXd* r = nullptr;
    const Eigen::VectorXd* pi = nullptr;
    const Eigen::VectorXd* n0 = nullptr;
    double n_total = 0.0;
};

FeasibleResult feasible_search(const Eigen::VectorXd& candidate, const Eigen::VectorXd& w_prev, const MixtureBounds& b,
                               const SurrogateContext& ctx, std::uint64_t seed, int samples = 64,
                               double concentration = 200.0);

// delta_k = max(round_half_even(w_k N) - n0_k, 0), then corrected by largest
// remainders so the entries sum to budget.
std::vector<std::int64_t> augmentation_sizes(const Eigen::VectorXd& w, const std::vector<std::int64_t>& n0,
                                             std::int64_t n_total, std::int64_t budget);

// alpha_k = max(d_k, 0) / max_j d_j, or 0 everywhere when max_j d_j <= 0.
Eigen::VectorXd gains_from_delta(const Eigen::VectorXd& delta);
Eigen::VectorXd gains(const PredictorParams& p, const Eigen::MatrixXd& r, const Eigen::VectorXd& w_prev,
                      const Eigen::VectorXd& w_new, const Eigen::VectorXd& n0, double n_total);

// argmax over rounds of pi^T s_bar (missing clusters skipped); earliest wins ties.
int best_round(const std::vector<RoundObservation>& history, const Eigen::VectorXd& pi);

}  // namespace autoscale
