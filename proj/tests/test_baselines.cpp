#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "autoscale/analytics.hpp"
#include "autoscale/baselines.hpp"

using namespace autoscale;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd gauss(std::mt19937_64& rng, int d, double scale = 1.0) {
    std::normal_distribution<double> n(0, scale);
    VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    return v;
}

EmbeddingTable table(std::mt19937_64& rng, const std::string& prefix, int n, int d, double shift = 0.0) {
    EmbeddingTable t;
    for (int i = 0; i < n; ++i) {
        VectorXd v = gauss(rng, d);
        v[0] += shift;
        t[prefix + std::to_string(i)] = v;
    }
    return t;
}

}  // namespace

TEST_CASE("uniform_select: whole pool, determinism, frequencies") {
    std::mt19937_64 rng(1);
    EmbeddingTable pool = table(rng, "u", 20, 2);
    auto all = uniform_select(pool, 20, 3).tokens();
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == 20);
    CHECK(uniform_select(pool, 5, 9).tokens() == uniform_select(pool, 5, 9).tokens());
    Selection over = uniform_select(pool, 30, 1);
    CHECK(over.shortfall);
    CHECK(over.ranked.size() == 20);

    std::map<std::string, int> freq;
    const int runs = 10000;
    for (int seed = 0; seed < runs; ++seed)
        for (const auto& t : uniform_select(pool, 5, static_cast<std::uint64_t>(seed)).tokens()) ++freq[t];
    const double p = 5.0 / 20.0;
    const double mean = runs * p, sd = std::sqrt(runs * p * (1 - p));
    for (const auto& [id, c] : freq) CHECK(std::abs(c - mean) <= 3 * sd);
    CHECK(freq.size() == 20);
}

TEST_CASE("scott bandwidth at 85000 samples in 16 dims") {
    CHECK(scott_bandwidth(85000, 16) == doctest::Approx(0.567).epsilon(1e-3 / 0.567));
    CHECK(std::abs(scott_bandwidth(85000, 16) - std::pow(85000.0, -0.05)) < 1e-15);
}

TEST_CASE("kde_log_density: agrees with a direct sum") {
    std::mt19937_64 rng(2);
    MatrixXd x(30, 3), q(5, 3);
    for (int i = 0; i < 30; ++i) x.row(i) = gauss(rng, 3).transpose();
    for (int i = 0; i < 5; ++i) q.row(i) = gauss(rng, 3).transpose();
    const double h = 0.7;
    VectorXd got = kde_log_density(x, q, h);
    for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int i = 0; i < 30; ++i) {
            double d2 = 0;
            for (int c = 0; c < 3; ++c) d2 += (q(j, c) - x(i, c)) * (q(j, c) - x(i, c));
            s += std::exp(-d2 / (2 * h * h)) / std::pow(2 * std::numbers::pi * h * h, 1.5);
        }
        CHECK(got[j] == doctest::Approx(std::log(s / 30)).epsilon(1e-12));
    }
}

TEST_CASE("iwr: identical sets give zero weights, outliers hit the clip") {
    std::mt19937_64 rng(3);
    EmbeddingTable real = table(rng, "r", 120, 20);
    EmbeddingTable syn;
    for (const auto& [id, v] : real) syn["s" + id.substr(1)] = v;
    auto w = iwr_log_weights(real, syn);
    for (const auto& [id, lw] : w) CHECK(std::abs(lw) < 0.1);

    // Selection then reduces to token-id order among the near-zero weights.
    Selection s = iwr_select(real, syn, 10);
    CHECK(s.ranked.size() == 10);

    EmbeddingTable far = syn;
    VectorXd out = VectorXd::Zero(20);
    out[0] = 1e3;
    far["zz_outlier"] = out;
    auto wf = iwr_log_weights(real, far);
    CHECK(wf.at("zz_outlier") == -100.0);
    Selection sf = iwr_select(real, far, static_cast<std::int64_t>(far.size()));
    CHECK(sf.ranked.back().token == "zz_outlier");
}

TEST_CASE("iwr: ranking follows the weights and prefers the real support") {
    std::mt19937_64 rng(4);
    EmbeddingTable real = table(rng, "r", 200, 8, 2.0);
    EmbeddingTable syn = table(rng, "s", 100, 8, -2.0);
    EmbeddingTable near = table(rng, "t", 100, 8, 2.0);
    syn.insert(near.begin(), near.end());
    auto w = iwr_log_weights(real, syn);
    Selection s = iwr_select(real, syn, 50);
    // Strictly monotone transforms of the weights keep the order; check the
    // ranking against a sort of exp(weight).
    std::vector<std::pair<double, std::string>> order;
    for (const auto& [id, lw] : w) order.emplace_back(-std::exp(lw / 10.0), id);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(s.ranked[i].token == order[i].second);
    int from_near = 0;
    for (const auto& r : s.ranked) from_near += r.token[0] == 't';
    CHECK(from_near >= 45);
}

TEST_CASE("iwr: log-weights flip sign when the roles swap") {
    std::mt19937_64 rng(5);
    MatrixXd a(40, 3), b(60, 3), q(10, 3);
    for (int i = 0; i < 40; ++i) a.row(i) = gauss(rng, 3).transpose();
    for (int i = 0; i < 60; ++i) b.row(i) = (gauss(rng, 3) + VectorXd::Constant(3, 0.5)).transpose();
    for (int i = 0; i < 10; ++i) q.row(i) = gauss(rng, 3).transpose();
    VectorXd ab = kde_log_density(a, q, 0.6) - kde_log_density(b, q, 0.6);
    VectorXd ba = kde_log_density(b, q, 0.6) - kde_log_density(a, q, 0.6);
    CHECK((ab + ba).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chameleon: identity kernel leverage and even split") {
    for (int k = 1; k <= 6; ++k) {
        MatrixXd c = MatrixXd::Identity(k, k);
        for (double lam : {0.01, 0.1, 1.0}) {
            VectorXd g = leverage_scores(c, lam);
            for (int j = 0; j < k; ++j) CHECK(std::abs(g[j] - 1.0 / (1.0 + k * lam)) < 1e-10);
            auto budgets = chameleon_budgets(chameleon_weights(g), 100);
            std::int64_t mx = 0, mn = 1000, sum = 0;
            for (auto b : budgets) {
                mx = std::max(mx, b);
                mn = std::min(mn, b);
                sum += b;
            }
            CHECK(sum == 100);
            CHECK(mx - mn <= 1);
        }
    }
    MatrixXd one(1, 3);
    one << 0.2, 0.3, 0.9;
    CHECK(chameleon_budgets(chameleon_weights(leverage_scores(one, 0.1)), 37) == std::vector<std::int64_t>{37});
}

TEST_CASE("chameleon: leverage agrees with the eigen-decomposition form") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + trial % 8;
        MatrixXd c(k, 5);
        for (int i = 0; i < k; ++i) c.row(i) = gauss(rng, 5).normalized().transpose();
        const double lam = 0.1;
        MatrixXd r = c * c.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(r);
        VectorXd expect = VectorXd::Zero(k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                const double ev = std::max(es.eigenvalues()[j], 0.0);
                expect[i] += ev / (ev + k * lam) * es.eigenvectors()(i, j) * es.eigenvectors()(i, j);
            }
        CHECK((leverage_scores(c, lam) - expect).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("chameleon: duplicated centroids have lower leverage and take more budget") {
    MatrixXd c(3, 3);
    c << 1, 0, 0,
         1, 0, 0,
         0, 1, 0;
    VectorXd g = leverage_scores(c, 0.1);
    // R has eigenvalues 2 (shared direction), 0 and 1; lambda K = 0.3.
    CHECK(g[0] == doctest::Approx(0.5 * 2.0 / 2.3).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.5 * 2.0 / 2.3).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(1.0 / 1.3).epsilon(1e-12));
    auto b = chameleon_budgets(chameleon_weights(g), 100);
    CHECK(b[0] > b[2]);
    CHECK(b[0] + b[1] + b[2] == 100);
}

TEST_CASE("chameleon: budget sum is exact over random centroid sets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 1 + trial % 12;
        MatrixXd c(k, 6);
        for (int i = 0; i < k; ++i) c.row(i) = gauss(rng, 6).normalized().transpose();
        const std::int64_t budget = static_cast<std::int64_t>(rng() % 2000);
        auto b = chameleon_budgets(chameleon_weights(leverage_scores(c, 0.1)), budget);
        std::int64_t s = 0;
        for (auto x : b) {
            CHECK(x >= 0);
            s += x;
        }
        CHECK(s == budget);
    }
}

TEST_CASE("chameleon_select: per-cluster draws and shortfall fill") {
    std::mt19937_64 rng(8);
    MatrixXd c = MatrixXd::Identity(3, 3);
    std::map<std::string, int> pool;
    for (int i = 0; i < 30; ++i) pool["a" + std::to_string(i)] = 0;
    for (int i = 0; i < 30; ++i) pool["b" + std::to_string(i)] = 1;
    for (int i = 0; i < 2; ++i) pool["c" + std::to_string(i)] = 2;
    ChameleonResult r = chameleon_select(c, pool, 30, 0.1, 5);
    CHECK(r.budgets == std::vector<std::int64_t>{10, 10, 10});
    auto toks = r.selection.tokens();
    CHECK(toks.size() == 30);
    CHECK(std::set<std::string>(toks.begin(), toks.end()).size() == 30);
    CHECK(r.filled == 8);
    int from_c = 0;
    for (auto& t : toks) from_c += t[0] == 'c';
    CHECK(from_c == 2);
    CHECK(chameleon_select(c, pool, 30, 0.1, 5).selection.tokens() == toks);

    ChameleonResult big = chameleon_select(c, pool, 100, 0.1, 5);
    CHECK(big.selection.shortfall);
    CHECK(big.selection.ranked.size() == pool.size());

    VectorXd v(3);
    v << 0.1, 0.9, 0.2;
    CHECK(nearest_centroid(c, v) == 1);
}
