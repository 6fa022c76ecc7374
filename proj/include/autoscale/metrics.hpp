#pragma once
// Driving scores and the analysis statistics built on them.

#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autoscale/cluster_ga.hpp"
#include "autoscale/scene.hpp"

namespace autoscale {

// Throws std::invalid_argument when a component is outside [0,1] or NaN.
void check_subscores(const SubscoreVector& s);

// NC DAC (5 EP + 5 TTC + 2 Comf) / 12
double pdms(const SubscoreVector& s);
// NC DAC DDC TLC (5 EP + 5 TTC + 2 LK + 2 HC + 2 EC) / 16
double epdms(const SubscoreVector& s);

struct JaccardResult {
    double value = 1.0;
    bool both_empty = false;
};

JaccardResult jaccard(const std::set<std::string>& a, const std::set<std::string>& b);
JaccardResult jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);
// From an intersection size and a union size.
double jaccard_counts(double intersection, double union_size);

// 1 - SSE / SST. Throws when fewer than two samples or the target is constant.
double r_squared(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

struct PropagationGain {
    double r2_kernel = 0.0;
    double r2_identity = 0.0;
    std::size_t samples = 0;
    double gain() const { return r2_kernel - r2_identity; }
};

// Fits the pairwise predictor on the same round history with R and with I
// and reports both in-sample R^2 values.
PropagationGain propagation_gain(const std::vector<RoundObservation>& history, const Eigen::MatrixXd& r,
                                 const Eigen::VectorXd& n0, double n_total, double lambda_reg = 1.0);

}  // namespace autoscale
