#include "autoscale/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "autoscale/analytics.hpp"

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Selection uniform_select(const EmbeddingTable& pool, std::int64_t budget, std::uint64_t seed) {
    return uniform_selection(pool, budget, seed);
}

double scott_bandwidth(double n_samples, int dims) {
    if (!(n_samples > 0) || dims <= 0) throw std::invalid_argument("scott_bandwidth: need positive count and dims");
    return std::pow(n_samples, -1.0 / (dims + 4));
}

VectorXd kde_log_density(const MatrixXd& samples, const MatrixXd& queries, double h) {
    if (samples.rows() == 0) throw std::invalid_argument("kde_log_density: no samples");
    if (samples.cols() != queries.cols()) throw std::invalid_argument("kde_log_density: dimension mismatch");
    if (!(h > 0)) throw std::invalid_argument("kde_log_density: bandwidth must be positive");
    const double n = static_cast<double>(samples.rows());
    const double dims = static_cast<double>(samples.cols());
    const double norm = -std::log(n) - 0.5 * dims * std::log(2 * std::numbers::pi * h * h);
    const VectorXd sn = samples.rowwise().squaredNorm();
    VectorXd out(queries.rows());
    constexpr Eigen::Index chunk = 512;
    for (Eigen::Index q0 = 0; q0 < queries.rows(); q0 += chunk) {
        const Eigen::Index len = std::min(chunk, queries.rows() - q0);
        const auto qb = queries.middleRows(q0, len);
        MatrixXd d2 = -2.0 * (qb * samples.transpose());
        d2.colwise() += qb.rowwise().squaredNorm();
        d2.rowwise() += sn.transpose();
        for (Eigen::Index i = 0; i < len; ++i) {
            auto row = d2.row(i).array().max(0.0) * (-0.5 / (h * h));
            const double mx = row.maxCoeff();
            out[q0 + i] = mx + std::log((row - mx).exp().sum()) + norm;
        }
    }
    return out;
}

std::map<std::string, double> iwr_log_weights(const EmbeddingTable& real, const EmbeddingTable& syn, const IwrOptions& opt) {
    if (real.empty() || syn.empty()) throw std::invalid_argument("iwr: both sets must be nonempty");
    const Eigen::Index d = real.begin()->second.size();
    const int dims = static_cast<int>(std::min<Eigen::Index>(opt.dims, d));
    const auto total = static_cast<Eigen::Index>(real.size() + syn.size());
    if (total < dims) throw std::invalid_argument("iwr: fewer samples than PCA dimensions");
    MatrixXd joint(total, d);
    Eigen::Index i = 0;
    for (const auto* set : {&real, &syn})
        for (const auto& [id, v] : *set) {
            if (v.size() != d) throw std::invalid_argument("iwr: dimension mismatch at " + id);
            joint.row(i++) = v.transpose();
        }
    PcaModel pca = pca_fit(joint, dims);
    MatrixXd proj = pca_transform_rows(pca, joint);
    const auto nr = static_cast<Eigen::Index>(real.size());
    const MatrixXd pr = proj.topRows(nr);
    const MatrixXd ps = proj.bottomRows(total - nr);

    const double h_real = opt.bandwidth ? *opt.bandwidth : scott_bandwidth(static_cast<double>(real.size()), dims);
    const double h_syn = opt.bandwidth             ? *opt.bandwidth
                         : opt.own_count_bandwidth ? scott_bandwidth(static_cast<double>(syn.size()), dims)
                                                   : h_real;
    const VectorXd lr = kde_log_density(pr, ps, h_real);
    const VectorXd ls = kde_log_density(ps, ps, h_syn);
    std::map<std::string, double> out;
    i = 0;
    for (const auto& [id, v] : syn) {
        out[id] = std::clamp(lr[i] - ls[i], -opt.clip, opt.clip);
        ++i;
    }
    return out;
}

Selection iwr_select(const EmbeddingTable& real, const EmbeddingTable& syn, std::int64_t budget, const IwrOptions& opt) {
    if (budget < 0) throw std::invalid_argument("iwr: negative budget");
    auto w = iwr_log_weights(real, syn, opt);
    std::vector<RankedCandidate> all;
    for (const auto& [id, lw] : w) all.push_back({id, lw, "", -1});
    std::stable_sort(all.begin(), all.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.token < b.token;
    });
    Selection s;
    s.method = "iwr";
    s.shortfall = static_cast<std::int64_t>(all.size()) < budget;
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(budget)));
    s.ranked = std::move(all);
    return s;
}

VectorXd leverage_scores(const MatrixXd& centroids, double lambda_c) {
    const Eigen::Index k = centroids.rows();
    if (k == 0) throw std::invalid_argument("leverage_scores: no centroids");
    if (!(lambda_c > 0)) throw std::invalid_argument("leverage_scores: lambda must be positive");
    const MatrixXd c = normalize_rows(centroids);
    const MatrixXd r = c * c.transpose();
    const MatrixXd a = r + static_cast<double>(k) * lambda_c * MatrixXd::Identity(k, k);
    // R and (R + cI) commute, so R (R + cI)^-1 = (R + cI)^-1 R.
    const MatrixXd m = a.ldlt().solve(r);
    VectorXd gamma = m.diagonal();
    if ((gamma.array() <= 0).any() || !gamma.allFinite())
        throw std::runtime_error("leverage_scores: non-positive leverage");
    return gamma;
}

VectorXd chameleon_weights(const VectorXd& gamma) {
    VectorXd z = gamma.cwiseInverse();
    z.array() -= z.maxCoeff();
    VectorXd e = z.array().exp().matrix();
    return e / e.sum();
}

std::vector<std::int64_t> chameleon_budgets(const VectorXd& weights, std::int64_t budget) {
    if (budget < 0) throw std::invalid_argument("chameleon_budgets: negative budget");
    const auto k = static_cast<std::size_t>(weights.size());
    std::vector<std::int64_t> c(k);
    std::vector<double> residual(k);
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
        const double target = weights[static_cast<Eigen::Index>(j)] * static_cast<double>(budget);
        c[j] = static_cast<std::int64_t>(std::nearbyint(target));
        residual[j] = target - static_cast<double>(c[j]);
        sum += c[j];
    }
    while (sum != budget) {
        std::size_t pick = k;
        for (std::size_t j = 0; j < k; ++j) {
            if (sum < budget) {
                if (pick == k || residual[j] > residual[pick]) pick = j;
            } else if (c[j] > 0) {
                if (pick == k || residual[j] < residual[pick]) pick = j;
            }
        }
        if (pick == k) break;
        const int step = sum < budget ? 1 : -1;
        c[pick] += step;
        residual[pick] -= step;
        sum += step;
    }
    return c;
}

int nearest_centroid(const MatrixXd& centroids, const VectorXd& v) {
    if (centroids.cols() != v.size()) throw std::invalid_argument("nearest_centroid: dimension mismatch");
    Eigen::Index arg = 0;
    (centroids * v).maxCoeff(&arg);
    return static_cast<int>(arg);
}

ChameleonResult chameleon_select(const MatrixXd& centroids, const std::map<std::string, int>& pool_clusters,
                                 std::int64_t budget, double lambda_c, std::uint64_t seed) {
    ChameleonResult res;
    res.gamma = leverage_scores(centroids, lambda_c);
    res.weights = chameleon_weights(res.gamma);
    res.budgets = chameleon_budgets(res.weights, budget);
    const auto k = static_cast<std::size_t>(centroids.rows());

    std::vector<std::vector<std::string>> members(k);
    for (const auto& [id, c] : pool_clusters) {
        if (c < 0 || static_cast<std::size_t>(c) >= k) throw std::invalid_argument("chameleon: cluster id out of range for " + id);
        members[static_cast<std::size_t>(c)].push_back(id);
    }
    std::mt19937_64 rng(seed);
    std::set<std::string> chosen;
    Selection& s = res.selection;
    s.method = "chameleon";
    for (std::size_t j = 0; j < k; ++j) {
        auto& m = members[j];
        std::shuffle(m.begin(), m.end(), rng);
        const auto take = std::min<std::size_t>(m.size(), static_cast<std::size_t>(res.budgets[j]));
        for (std::size_t i = 0; i < take; ++i) {
            chosen.insert(m[i]);
            s.ranked.push_back({m[i], res.weights[static_cast<Eigen::Index>(j)], "", static_cast<int>(j)});
        }
    }
    const auto want = std::min<std::size_t>(pool_clusters.size(), static_cast<std::size_t>(budget));
    if (s.ranked.size() < want) {
        std::vector<std::string> rest;
        for (const auto& [id, c] : pool_clusters)
            if (!chosen.count(id)) rest.push_back(id);
        std::shuffle(rest.begin(), rest.end(), rng);
        for (std::size_t i = 0; s.ranked.size() < want; ++i) {
            const int c = pool_clusters.at(rest[i]);
            s.ranked.push_back({rest[i], res.weights[c], "", c});
            ++res.filled;
        }
    }
    s.shortfall = static_cast<std::int64_t>(pool_clusters.size()) < budget;
    return res;
}

}  // namespace autoscale
