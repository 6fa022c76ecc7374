#include "autoscale/retrieval.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "autoscale/log.hpp"

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> Selection::tokens() const {
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.token);
    return out;
}

std::vector<Anchor> select_anchors(const std::map<std::string, double>& scores, const std::map<std::string, int>& clusters,
                                   const EmbeddingTable& cal_embeddings, const AnchorPolicy& policy) {
    std::map<int, std::vector<std::pair<double, std::string>>> below;
    for (const auto& [id, s] : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("select_anchors: score outside [0,1] for " + id);
        auto c = clusters.find(id);
        if (c == clusters.end()) throw std::invalid_argument("select_anchors: no cluster for " + id);
        if (s <= policy.threshold) below[c->second].emplace_back(s, id);
    }
    std::vector<Anchor> out;
    for (auto& [cluster, items] : below) {
        std::sort(items.begin(), items.end());
        const std::size_t take = std::min(items.size(), static_cast<std::size_t>(std::max(policy.max_per_cluster, 0)));
        for (std::size_t i = 0; i < take; ++i) {
            auto e = cal_embeddings.find(items[i].second);
            if (e == cal_embeddings.end()) throw std::invalid_argument("select_anchors: no embedding for " + items[i].second);
            out.push_back({items[i].second, cluster, items[i].first, e->second});
        }
    }
    return out;
}

double priority_value(double alpha, double score, double cosine) {
    return (1.0 + alpha) * (1.0 - score) * std::max(cosine, 0.0);
}

double priority(const Anchor& a, const VectorXd& candidate, const VectorXd& alpha) {
    if (a.cluster < 0 || a.cluster >= alpha.size()) throw std::invalid_argument("priority: anchor cluster outside gain vector");
    const double c = a.embedding.dot(candidate) / (a.embedding.norm() * candidate.norm());
    return priority_value(alpha[a.cluster], a.score, c);
}

namespace {

void sort_ranked(std::vector<RankedCandidate>& v) {
    std::sort(v.begin(), v.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.token < b.token;
    });
}

}  // namespace

Selection uniform_selection(const std::vector<std::string>& pool_ids, std::int64_t budget, std::uint64_t seed) {
    if (budget < 0) throw std::invalid_argument("selection: negative budget");
    std::vector<std::string> ids = pool_ids;
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    Selection s;
    s.method = "uniform";
    s.shortfall = static_cast<std::int64_t>(ids.size()) < budget;
    const auto take = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(budget));
    for (std::size_t i = 0; i < take; ++i) s.ranked.push_back({ids[i], 0.0, "", -1});
    return s;
}

Selection uniform_selection(const EmbeddingTable& pool, std::int64_t budget, std::uint64_t seed) {
    std::vector<std::string> ids;
    for (const auto& kv : pool) ids.push_back(kv.first);
    return uniform_selection(ids, budget, seed);
}

Selection retrieve(const std::vector<Anchor>& anchors, const EmbeddingTable& pool, const VectorXd& alpha,
                   std::int64_t budget, std::uint64_t seed) {
    if (budget < 0) throw std::invalid_argument("retrieve: negative budget");
    if (anchors.empty()) {
        log().warn("retrieve: no anchors, falling back to a uniform draw of {} tokens", budget);
        Selection s = uniform_selection(pool, budget, seed);
        s.uniform_fallback = true;
        s.method = "autoscale";
        return s;
    }
    Selection s;
    s.shortfall = static_cast<std::int64_t>(pool.size()) < budget;
    if (pool.empty() || budget == 0) return s;

    const Eigen::Index d = anchors.front().embedding.size();
    MatrixXd a(static_cast<Eigen::Index>(anchors.size()), d);
    VectorXd weight(a.rows());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const Anchor& an = anchors[i];
        if (an.embedding.size() != d) throw std::invalid_argument("retrieve: anchor dimension mismatch");
        if (an.cluster < 0 || an.cluster >= alpha.size()) throw std::invalid_argument("retrieve: anchor cluster outside gain vector");
        a.row(static_cast<Eigen::Index>(i)) = an.embedding.normalized().transpose();
        weight[static_cast<Eigen::Index>(i)] = (1.0 + alpha[an.cluster]) * (1.0 - an.score);
    }
    MatrixXd c(static_cast<Eigen::Index>(pool.size()), d);
    std::vector<const std::string*> ids;
    ids.reserve(pool.size());
    for (const auto& [id, v] : pool) {
        if (v.size() != d) throw std::invalid_argument("retrieve: candidate dimension mismatch for " + id);
        c.row(static_cast<Eigen::Index>(ids.size())) = v.normalized().transpose();
        ids.push_back(&id);
    }
    const MatrixXd cos = c * a.transpose();  // candidates x anchors

    std::vector<RankedCandidate> all;
    all.reserve(ids.size());
    for (Eigen::Index i = 0; i < cos.rows(); ++i) {
        double best = -1.0;
        Eigen::Index arg = 0;
        for (Eigen::Index j = 0; j < cos.cols(); ++j) {
            const double p = weight[j] * std::max(cos(i, j), 0.0);
            if (p > best) {
                best = p;
                arg = j;
            }
        }
        const Anchor& an = anchors[static_cast<std::size_t>(arg)];
        all.push_back({*ids[static_cast<std::size_t>(i)], best, an.token, an.cluster});
    }
    const auto take = std::min<std::size_t>(all.size(), static_cast<std::size_t>(budget));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      [](const RankedCandidate& x, const RankedCandidate& y) {
                          if (x.priority != y.priority) return x.priority > y.priority;
                          return x.token < y.token;
                      });
    all.resize(take);
    sort_ranked(all);
    s.ranked = std::move(all);
    return s;
}

void write_selection_csv(const Selection& s, const std::filesystem::path& path) {
    auto os = open_out(path);
    CsvWriter w(os);
    w.row({"rank", "token_id", "priority", "best_anchor_id", "anchor_cluster", "method"});
    for (std::size_t i = 0; i < s.ranked.size(); ++i) {
        const auto& r = s.ranked[i];
        w.field(i + 1).field(r.token).field(r.priority).field(r.best_anchor).field(r.anchor_cluster).field(s.method);
        w.end_row();
    }
}

}  // namespace autoscale
