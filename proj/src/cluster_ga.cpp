#include "autoscale/cluster_ga.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_mixture(const VectorXd& w, const char* what) {
    if (w.size() == 0) throw std::invalid_argument(std::string(what) + ": empty");
    if (!w.allFinite() || (w.array() <= 0).any()) throw std::invalid_argument(std::string(what) + ": entries must be positive");
    if (std::abs(w.sum() - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": must sum to 1");
}

namespace {

VectorXd floored(const VectorXd& w) { return w.cwiseMax(kMixtureFloor); }

void check_sizes(const VectorXd& w, const VectorXd& n0, const MatrixXd* r = nullptr) {
    if (n0.size() != w.size()) throw std::invalid_argument("cluster-ga: n0 size does not match mixture");
    if (r && (r->rows() != w.size() || r->cols() != w.size()))
        throw std::invalid_argument("cluster-ga: similarity matrix size does not match mixture");
}

}  // namespace

VectorXd synthetic_ratio(const VectorXd& w, const VectorXd& n0, double n_total) {
    if (!(n_total > 0)) throw std::invalid_argument("synthetic_ratio: N must be positive");
    check_sizes(w, n0);
    VectorXd wf = floored(w);
    VectorXd r(w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) r[j] = std::max(0.0, 1.0 - n0[j] / (wf[j] * n_total));
    return r;
}

std::vector<PairSample> build_pairs(const std::vector<RoundObservation>& history, const MatrixXd& r, const VectorXd& n0,
                                    double n_total, double recency_tau) {
    std::vector<PairSample> out;
    if (history.size() < 2) return out;
    const Eigen::Index k = r.rows();
    const int latest = static_cast<int>(history.size()) - 1;
    std::vector<VectorXd> logw, ratio;
    for (const auto& h : history) {
        check_sizes(h.w, n0, &r);
        logw.push_back(floored(h.w).array().log().matrix());
        ratio.push_back(synthetic_ratio(h.w, n0, n_total));
    }
    auto is_missing = [](const RoundObservation& o, Eigen::Index c) {
        return (!o.missing.empty() && o.missing[static_cast<std::size_t>(c)]) || !std::isfinite(o.s_bar[c]);
    };
    for (int a = 0; a < static_cast<int>(history.size()); ++a) {
        for (int b = a + 1; b < static_cast<int>(history.size()); ++b) {
            const VectorXd dlog = logw[static_cast<std::size_t>(b)] - logw[static_cast<std::size_t>(a)];
            const VectorXd dr = ratio[static_cast<std::size_t>(b)] - ratio[static_cast<std::size_t>(a)];
            const double weight = recency_tau > 0 ? std::exp(-(latest - b) / recency_tau) : 1.0;
            for (Eigen::Index c = 0; c < k; ++c) {
                const auto& ha = history[static_cast<std::size_t>(a)];
                const auto& hb = history[static_cast<std::size_t>(b)];
                if (is_missing(ha, c) || is_missing(hb, c)) continue;
                PairSample s;
                s.round_a = a;
                s.round_b = b;
                s.cluster = static_cast<int>(c);
                s.features.resize(k + 1);
                s.features.head(k) = r.row(c).transpose().cwiseProduct(dlog);
                s.features[k] = r.row(c).dot(dr);
                s.target = hb.s_bar[c] - ha.s_bar[c];
                s.weight = weight;
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

PredictorParams fit_predictor(const std::vector<PairSample>& pairs, int k, double lambda_reg) {
    if (pairs.empty()) throw std::invalid_argument("fit_predictor: no pair rows");
    if (!(lambda_reg > 0)) throw std::invalid_argument("fit_predictor: lambda_reg must be positive");
    const Eigen::Index p = k + 1;
    MatrixXd a = lambda_reg * MatrixXd::Identity(p, p);
    VectorXd rhs = VectorXd::Zero(p);
    for (const auto& s : pairs) {
        if (s.features.size() != p) throw std::invalid_argument("fit_predictor: feature width mismatch");
        a.noalias() += s.weight * s.features * s.features.transpose();
        rhs.noalias() += s.weight * s.target * s.features;
    }
    Eigen::LDLT<MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("fit_predictor: normal equations are not positive definite");
    VectorXd phi = ldlt.solve(rhs);
    if (!phi.allFinite()) throw std::runtime_error("fit_predictor: non-finite solution");
    PredictorParams out;
    out.beta = phi.head(k);
    out.gamma = phi[k];
    out.lambda_reg = lambda_reg;
    return out;
}

VectorXd predict_delta(const PredictorParams& p, const MatrixXd& r, const VectorXd& w_from, const VectorXd& w_to,
                       const VectorXd& n0, double n_total) {
    check_sizes(w_from, n0, &r);
    check_sizes(w_to, n0, &r);
    const VectorXd dlog = floored(w_to).array().log().matrix() - floored(w_from).array().log().matrix();
    const VectorXd dr = synthetic_ratio(w_to, n0, n_total) - synthetic_ratio(w_from, n0, n_total);
    return r * p.beta.cwiseProduct(dlog) + p.gamma * (r * dr);
}

VectorXd gradient(const PredictorParams& p, const MatrixXd& r, const VectorXd& pi, const VectorXd& w, const VectorXd& n0,
                  double n_total) {
    check_sizes(w, n0, &r);
    if (!(n_total > 0)) throw std::invalid_argument("gradient: N must be positive");
    const VectorXd weight = r.transpose() * pi;
    const VectorXd wf = floored(w);
    VectorXd g(w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) g[j] = weight[j] * (p.beta[j] + p.gamma * n0[j] / (wf[j] * n_total));
    return g;
}

double half_cosine_schedule(int t, int rounds, double eps_max) {
    if (rounds < 2) throw std::invalid_argument("half_cosine_schedule: need at least 2 rounds");
    if (t < 2 || t > rounds) throw std::invalid_argument("half_cosine_schedule: round outside [2, T]");
    return eps_max * 0.5 * (1.0 + std::cos(std::numbers::pi * (t - 2) / (rounds - 1)));
}

namespace {

VectorXd eg_step(const VectorXd& logw, const VectorXd& g, double eta) {
    VectorXd z = logw + eta * g;
    z.array() -= z.maxCoeff();
    VectorXd e = z.array().exp().matrix();
    return e / e.sum();
}

}  // namespace

EgResult eg_update(const VectorXd& w_prev, const VectorXd& g, double eps, double eta_cap, int iterations) {
    check_mixture(w_prev, "eg_update");
    if (g.size() != w_prev.size()) throw std::invalid_argument("eg_update: gradient size mismatch");
    if (!g.allFinite()) throw std::invalid_argument("eg_update: non-finite gradient");
    if (eps < 0) throw std::invalid_argument("eg_update: negative step length");
    EgResult res;
    res.w = w_prev;
    if (eps == 0.0 || g.maxCoeff() == g.minCoeff()) return res;

    const VectorXd logw = w_prev.array().log().matrix();
    auto dist = [&](double eta) { return (eg_step(logw, g, eta) - w_prev).norm(); };
    if (dist(eta_cap) < eps) {
        res.eta = eta_cap;
        res.reached = false;
    } else {
        double lo = 0.0, hi = eta_cap;
        for (int i = 0; i < iterations; ++i) {
            const double mid = 0.5 * (lo + hi);
            (dist(mid) < eps ? lo : hi) = mid;
        }
        res.eta = 0.5 * (lo + hi);
    }
    res.w = eg_step(logw, g, res.eta);
    if (res.w.minCoeff() < kMixtureFloor) {
        res.w = res.w.cwiseMax(kMixtureFloor);
        res.w /= res.w.sum();
    }
    return res;
}

MixtureBounds mixture_bounds(const VectorXd& n0, const VectorXd& pool, double n_total) {
    if (n0.size() != pool.size()) throw std::invalid_argument("mixture_bounds: size mismatch");
    if (!(n_total > 0)) throw std::invalid_argument("mixture_bounds: N must be positive");
    MixtureBounds b;
    b.lower = n0 / n_total;
    if (b.lower.sum() > 1.0 + 1e-12) throw std::invalid_argument("mixture_bounds: real data alone exceeds N");
    b.upper = ((n0 + pool) / n_total).cwiseMin(1.0);
    if (b.upper.sum() < 1.0) {
        b.upper = VectorXd::Ones(n0.size());
        b.relaxed = true;
    }
    return b;
}

bool is_feasible(const VectorXd& w, const MixtureBounds& b, double tol) {
    if (w.size() != b.lower.size() || !w.allFinite()) return false;
    if (std::abs(w.sum() - 1.0) > 1e-9) return false;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (w[j] < std::max(b.lower[j], kMixtureFloor) - tol) return false;
        if (w[j] > b.upper[j] + tol) return false;
    }
    return true;
}

VectorXd project_feasible(const VectorXd& w, const MixtureBounds& b) {
    const VectorXd lo = b.lower.cwiseMax(kMixtureFloor);
    const VectorXd& hi = b.upper;
    VectorXd x = w.cwiseMax(lo).cwiseMin(hi);
    for (int it = 0; it < 200; ++it) {
        const double excess = 1.0 - x.sum();
        if (std::abs(excess) < 1e-15) break;
        // Room in the direction the mass has to move.
        VectorXd room = excess > 0 ? (hi - x).cwiseMax(0.0) : (x - lo).cwiseMax(0.0);
        VectorXd share = excess > 0 ? x.cwiseProduct((room.array() > 0).cast<double>().matrix())
                                    : room;
        if (share.sum() <= 0) share = room;
        if (room.sum() <= 0) break;
        x += (excess * share / share.sum());
        x = x.cwiseMax(lo).cwiseMin(hi);
    }
    return x / x.sum();
}

FeasibleResult feasible_search(const VectorXd& candidate, const VectorXd& w_prev, const MixtureBounds& b,
                               const SurrogateContext& ctx, std::uint64_t seed, int samples, double concentration) {
    FeasibleResult res;
    if (is_feasible(candidate, b)) {
        res.w = candidate;
        return res;
    }
    VectorXd base = candidate.cwiseMax(b.lower.cwiseMax(kMixtureFloor)).cwiseMin(b.upper);
    base /= base.sum();

    auto objective = [&](const VectorXd& w) {
        return ctx.pi->dot(predict_delta(*ctx.params, *ctx.r, w_prev, w, *ctx.n0, ctx.n_total));
    };
    std::mt19937_64 rng(seed);
    std::optional<VectorXd> best;
    double best_value = 0.0;
    for (int s = 0; s < samples; ++s) {
        VectorXd d(base.size());
        for (Eigen::Index j = 0; j < base.size(); ++j)
            d[j] = std::gamma_distribution<double>(concentration * base[j], 1.0)(rng);
        if (!(d.sum() > 0)) continue;
        d /= d.sum();
        if (!is_feasible(d, b)) continue;
        const double v = objective(d);
        if (!best || v > best_value) {
            best = d;
            best_value = v;
        }
    }
    if (best) {
        res.w = *best;
        res.method = FeasibleMethod::Perturbed;
    } else {
        res.w = project_feasible(candidate, b);
        res.method = FeasibleMethod::Projection;
    }
    return res;
}

std::vector<std::int64_t> augmentation_sizes(const VectorXd& w, const std::vector<std::int64_t>& n0,
                                             std::int64_t n_total, std::int64_t budget) {
    if (static_cast<std::size_t>(w.size()) != n0.size()) throw std::invalid_argument("augmentation_sizes: size mismatch");
    if (budget < 0) throw std::invalid_argument("augmentation_sizes: negative budget");
    const std::size_t k = n0.size();
    std::vector<std::int64_t> delta(k);
    std::vector<double> rem(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double target = w[static_cast<Eigen::Index>(j)] * static_cast<double>(n_total);
        const auto rounded = static_cast<std::int64_t>(std::nearbyint(target));  // default mode: half to even
        delta[j] = std::max<std::int64_t>(rounded - n0[j], 0);
        rem[j] = target - static_cast<double>(n0[j]) - static_cast<double>(delta[j]);
    }
    std::int64_t sum = std::accumulate(delta.begin(), delta.end(), std::int64_t{0});
    if (k == 0 || sum == budget) return delta;

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    if (sum < budget) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t i = 0; sum < budget; i = (i + 1) % k) {
            ++delta[order[i]];
            ++sum;
        }
    } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] < rem[b]; });
        while (sum > budget) {
            for (std::size_t i = 0; i < k && sum > budget; ++i) {
                if (delta[order[i]] > 0) {
                    --delta[order[i]];
                    --sum;
                }
            }
        }
    }
    return delta;
}

VectorXd gains_from_delta(const VectorXd& delta) {
    VectorXd alpha = VectorXd::Zero(delta.size());
    if (delta.size() == 0) return alpha;
    const double top = delta.maxCoeff();
    if (!(top > 0)) return alpha;
    for (Eigen::Index k = 0; k < delta.size(); ++k) alpha[k] = std::max(delta[k], 0.0) / top;
    return alpha;
}

VectorXd gains(const PredictorParams& p, const MatrixXd& r, const VectorXd& w_prev, const VectorXd& w_new,
               const VectorXd& n0, double n_total) {
    return gains_from_delta(predict_delta(p, r, w_prev, w_new, n0, n_total));
}

int best_round(const std::vector<RoundObservation>& history, const VectorXd& pi) {
    if (history.empty()) throw std::invalid_argument("best_round: empty history");
    int best = 0;
    double best_value = -1.0;
    for (std::size_t t = 0; t < history.size(); ++t) {
        double v = 0.0;
        for (Eigen::Index k = 0; k < pi.size(); ++k)
            if (std::isfinite(history[t].s_bar[k])) v += pi[k] * history[t].s_bar[k];
        if (v > best_value) {
            best_value = v;
            best = static_cast<int>(t);
        }
    }
    return best;
}

}  // namespace autoscale
