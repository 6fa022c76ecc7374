#include "autoscale/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "autoscale/log.hpp"

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_subscores(const SubscoreVector& s) {
    const char* names[] = {"nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc", "ec", "comf"};
    const double vals[] = {s.nc, s.dac, s.ddc, s.tlc, s.ep, s.ttc, s.lk, s.hc, s.ec, s.comf};
    for (int i = 0; i < SubscoreVector::kSize; ++i)
        if (!(vals[i] >= 0.0 && vals[i] <= 1.0))
            throw std::invalid_argument(std::string("subscore ") + names[i] + " outside [0,1]");
}

double pdms(const SubscoreVector& s) {
    check_subscores(s);
    return s.nc * s.dac * (5 * s.ep + 5 * s.ttc + 2 * s.comf) / 12.0;
}

double epdms(const SubscoreVector& s) {
    check_subscores(s);
    return s.nc * s.dac * s.ddc * s.tlc * (5 * s.ep + 5 * s.ttc + 2 * s.lk + 2 * s.hc + 2 * s.ec) / 16.0;
}

JaccardResult jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) {
        log().warn("jaccard: both sets empty, returning 1");
        return {1.0, true};
    }
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return {static_cast<double>(inter) / static_cast<double>(uni), false};
}

JaccardResult jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return jaccard(std::set<std::string>(a.begin(), a.end()), std::set<std::string>(b.begin(), b.end()));
}

double jaccard_counts(double intersection, double union_size) {
    if (!(union_size > 0) || intersection < 0 || intersection > union_size)
        throw std::invalid_argument("jaccard_counts: need 0 <= intersection <= union, union > 0");
    return intersection / union_size;
}

double r_squared(const VectorXd& predicted, const VectorXd& actual) {
    if (predicted.size() != actual.size()) throw std::invalid_argument("r_squared: size mismatch");
    if (actual.size() < 2) throw std::invalid_argument("r_squared: need at least two samples");
    const double mean = actual.mean();
    const double sst = (actual.array() - mean).square().sum();
    if (!(sst > 0)) throw std::invalid_argument("r_squared: target has zero variance");
    const double sse = (actual - predicted).squaredNorm();
    return 1.0 - sse / sst;
}

namespace {

double fitted_r2(const std::vector<PairSample>& pairs, int k, double lambda_reg) {
    PredictorParams p = fit_predictor(pairs, k, lambda_reg);
    VectorXd coef(k + 1);
    coef.head(k) = p.beta;
    coef[k] = p.gamma;
    VectorXd pred(static_cast<Eigen::Index>(pairs.size())), actual(pred.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pred[static_cast<Eigen::Index>(i)] = pairs[i].features.dot(coef);
        actual[static_cast<Eigen::Index>(i)] = pairs[i].target;
    }
    return r_squared(pred, actual);
}

}  // namespace

PropagationGain propagation_gain(const std::vector<RoundObservation>& history, const MatrixXd& r, const VectorXd& n0,
                                 double n_total, double lambda_reg) {
    const int k = static_cast<int>(r.rows());
    const auto with_r = build_pairs(history, r, n0, n_total);
    const auto with_i = build_pairs(history, MatrixXd::Identity(k, k), n0, n_total);
    PropagationGain g;
    g.samples = with_r.size();
    g.r2_kernel = fitted_r2(with_r, k, lambda_reg);
    g.r2_identity = fitted_r2(with_i, k, lambda_reg);
    return g;
}

}  // namespace autoscale
