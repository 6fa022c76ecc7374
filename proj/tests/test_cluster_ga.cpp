#include <doctest.h>

#include <cmath>
#include <random>

#include "autoscale/analytics.hpp"
#include "autoscale/cluster_ga.hpp"

using namespace autoscale;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_mixture(std::mt19937_64& rng, int k, double spread = 1.0) {
    std::gamma_distribution<double> g(5.0 / spread, 1.0);
    VectorXd w(k);
    for (int i = 0; i < k; ++i) w[i] = g(rng);
    return w / w.sum();
}

MatrixXd random_similarity(std::mt19937_64& rng, int k) {
    std::normal_distribution<double> n(0, 1);
    MatrixXd c(k, 4);
    for (int i = 0; i < c.size(); ++i) c(i) = n(rng);
    return rbf_similarity(normalize_rows(c), 0.5).r;
}

// Direct loop evaluation of the surrogate for one cluster.
double surrogate(const MatrixXd& r, const VectorXd& beta, double gamma, const VectorXd& wa, const VectorXd& wb,
                 const VectorXd& n0, double n, int k) {
    double s = 0;
    for (int j = 0; j < wa.size(); ++j) {
        const double ra = std::max(0.0, 1.0 - n0[j] / (wa[j] * n));
        const double rb = std::max(0.0, 1.0 - n0[j] / (wb[j] * n));
        s += r(k, j) * beta[j] * (std::log(wb[j]) - std::log(wa[j])) + gamma * r(k, j) * (rb - ra);
    }
    return s;
}

}  // namespace

TEST_CASE("synthetic_ratio: direct formula") {
    VectorXd n0(3);
    n0 << 10, 20, 30;
    VectorXd w(3);
    w << 0.1, 0.4, 0.5;  // N = 100: 10 = 10, 40 = 2*20, 50 > 30
    VectorXd r = synthetic_ratio(w, n0, 100.0);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r[2] == doctest::Approx(0.4).epsilon(1e-15));
    w << 0.05, 0.45, 0.5;
    CHECK(synthetic_ratio(w, n0, 100.0)[0] == 0.0);
    CHECK_THROWS_AS(synthetic_ratio(w, n0, 0.0), std::invalid_argument);
}

TEST_CASE("build_pairs: row counts, features and missing clusters") {
    std::mt19937_64 rng(1);
    const int k = 4;
    MatrixXd r = random_similarity(rng, k);
    VectorXd n0 = VectorXd::Constant(k, 20.0);
    std::vector<RoundObservation> h;
    for (int t = 0; t < 3; ++t) h.push_back({random_mixture(rng, k), VectorXd::Random(k).cwiseAbs(), {}});
    CHECK(build_pairs({h[0]}, r, n0, 100).empty());
    CHECK(build_pairs({h[0], h[1]}, r, n0, 100).size() == k);
    auto pairs = build_pairs(h, r, n0, 100);
    CHECK(pairs.size() == 3 * k);
    for (const auto& p : pairs) {
        const auto& a = h[static_cast<std::size_t>(p.round_a)];
        const auto& b = h[static_cast<std::size_t>(p.round_b)];
        for (int j = 0; j < k; ++j)
            CHECK(p.features[j] == doctest::Approx(r(p.cluster, j) * (std::log(b.w[j]) - std::log(a.w[j]))).epsilon(1e-12));
        VectorXd unit_beta = VectorXd::Zero(k);
        CHECK(p.features[k] == doctest::Approx(surrogate(r, unit_beta, 1.0, a.w, b.w, n0, 100, p.cluster)).epsilon(1e-12));
        CHECK(p.target == b.s_bar[p.cluster] - a.s_bar[p.cluster]);
    }

    RoundObservation same = h[0];
    auto zero = build_pairs({h[0], same}, r, n0, 100);
    for (const auto& p : zero) CHECK(p.features.cwiseAbs().maxCoeff() == 0.0);

    h[1].missing = {false, true, false, false};
    auto dropped = build_pairs(h, r, n0, 100);
    CHECK(dropped.size() == 3 * k - 2);
    for (const auto& p : dropped) CHECK(!(p.cluster == 1 && (p.round_a == 1 || p.round_b == 1)));

    auto recency = build_pairs(h, r, n0, 100, 2.0);
    for (const auto& p : recency) CHECK(p.weight == doctest::Approx(std::exp(-(2 - p.round_b) / 2.0)));
}

TEST_CASE("fit_predictor: planted parameters are recovered, ridge shrinks") {
    std::mt19937_64 rng(2);
    const int k = 5;
    MatrixXd r = random_similarity(rng, k);
    VectorXd n0(k);
    n0 << 30, 10, 25, 15, 20;
    const double n = 200.0;
    VectorXd beta(k);
    beta << 0.05, -0.02, 0.1, 0.03, -0.04;
    const double gamma = -0.07;

    std::vector<RoundObservation> h;
    VectorXd s0 = VectorXd::Constant(k, 0.5);
    for (int t = 0; t < 8; ++t) {
        VectorXd w = random_mixture(rng, k, 2.0);
        w = project_feasible(w, mixture_bounds(n0, VectorXd::Constant(k, 200.0), n));
        RoundObservation o{w, VectorXd(k), {}};
        h.push_back(o);
    }
    for (auto& o : h)
        for (int c = 0; c < k; ++c) o.s_bar[c] = s0[c] + surrogate(r, beta, gamma, h[0].w, o.w, n0, n, c);

    auto pairs = build_pairs(h, r, n0, n);
    PredictorParams exact = fit_predictor(pairs, k, 1e-8);
    CHECK((exact.beta - beta).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(std::abs(exact.gamma - gamma) < 1e-3);

    PredictorParams ridge = fit_predictor(pairs, k, 1.0);
    VectorXd phi_exact(k + 1), phi_ridge(k + 1);
    phi_exact << exact.beta, exact.gamma;
    phi_ridge << ridge.beta, ridge.gamma;
    CHECK(phi_ridge.norm() < phi_exact.norm());
    double prev = phi_exact.norm();
    for (double lam : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        PredictorParams q = fit_predictor(pairs, k, lam);
        VectorXd phi(k + 1);
        phi << q.beta, q.gamma;
        CHECK(phi.norm() < prev);
        prev = phi.norm();
    }

    std::vector<PairSample> reversed(pairs.rbegin(), pairs.rend());
    PredictorParams rev = fit_predictor(reversed, k, 1.0);
    CHECK((rev.beta - ridge.beta).cwiseAbs().maxCoeff() < 1e-12);

    for (auto& p : pairs) p.target = 0.0;
    PredictorParams z = fit_predictor(pairs, k, 1.0);
    CHECK(z.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.gamma == 0.0);
    CHECK_THROWS_AS(fit_predictor({}, k, 1.0), std::invalid_argument);
}

TEST_CASE("predict_delta: identity, single-cluster and linearity") {
    const int k = 3;
    PredictorParams p{VectorXd::Unit(k, 0), 0.0, 1.0};
    MatrixXd eye = MatrixXd::Identity(k, k);
    VectorXd n0 = VectorXd::Constant(k, 10);
    VectorXd w(k);
    w << 0.3, 0.3, 0.4;
    CHECK(predict_delta(p, eye, w, w, n0, 100).cwiseAbs().maxCoeff() == 0.0);

    VectorXd w2 = w;
    w2[0] *= std::exp(0.1);
    VectorXd d = predict_delta(p, eye, w, w2, n0, 100);
    CHECK(d[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(d[1] == 0.0);
    CHECK(d[2] == 0.0);

    std::mt19937_64 rng(3);
    MatrixXd r = random_similarity(rng, k);
    PredictorParams q{VectorXd::Random(k), 0.0, 1.0};
    VectorXd wa = random_mixture(rng, k), wb = random_mixture(rng, k);
    VectorXd wc = (2 * wb.array().log() - wa.array().log()).exp().matrix();  // doubles the log step
    CHECK((predict_delta(q, r, wa, wc, n0, 100) - 2 * predict_delta(q, r, wa, wb, n0, 100)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient: closed forms and finite differences in log space") {
    const int k = 4;
    MatrixXd eye = MatrixXd::Identity(k, k);
    VectorXd n0(k);
    n0 << 10, 20, 5, 15;
    VectorXd w(k);
    w << 0.2, 0.3, 0.1, 0.4;
    const double n = 100.0;
    PredictorParams p{VectorXd(k), 0.3, 1.0};
    p.beta << 0.1, -0.2, 0.05, 0.4;

    VectorXd e1 = VectorXd::Unit(k, 1);
    VectorXd g = gradient(p, eye, e1, w, n0, n);
    for (int j = 0; j < k; ++j) CHECK(g[j] == (j == 1 ? doctest::Approx(-0.2 + 0.3 * 20 / 30.0) : doctest::Approx(0.0)));

    PredictorParams nog = p;
    nog.gamma = 0.0;
    VectorXd uniform = VectorXd::Constant(k, 1.0 / k);
    CHECK((gradient(nog, eye, uniform, w, n0, n) - p.beta / k).cwiseAbs().maxCoeff() < 1e-15);

    std::mt19937_64 rng(4);
    MatrixXd r = random_similarity(rng, k);
    VectorXd pi = random_mixture(rng, k);
    VectorXd an = gradient(p, r, pi, w, n0, n);
    const double h = 1e-6;
    for (int j = 0; j < k; ++j) {
        VectorXd up = w, down = w;
        up[j] *= std::exp(h);
        down[j] *= std::exp(-h);
        const double fd = (pi.dot(predict_delta(p, r, w, up, n0, n)) - pi.dot(predict_delta(p, r, w, down, n0, n))) / (2 * h);
        INFO(j << " fd " << fd << " analytic " << an[j]);
        CHECK(std::abs(fd - an[j]) / std::max(std::abs(an[j]), 1e-6) < 1e-5);
    }
}

TEST_CASE("half_cosine_schedule: endpoints and monotone decay") {
    CHECK(half_cosine_schedule(2, 5, 0.1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(half_cosine_schedule(5, 5, 0.1) == doctest::Approx(0.01464).epsilon(1e-3));
    CHECK(half_cosine_schedule(5, 5, 0.1) == doctest::Approx(0.05 * (1 + std::cos(3 * std::acos(-1.0) / 4))).epsilon(1e-14));
    for (int T = 2; T <= 12; ++T)
        for (int t = 3; t <= T; ++t) CHECK(half_cosine_schedule(t, T, 0.1) <= half_cosine_schedule(t - 1, T, 0.1));
    CHECK_THROWS_AS(half_cosine_schedule(1, 5, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(half_cosine_schedule(2, 1, 0.1), std::invalid_argument);
}

TEST_CASE("eg_update: invariances and step calibration") {
    VectorXd w(4);
    w << 0.1, 0.2, 0.3, 0.4;
    CHECK(eg_update(w, VectorXd::Zero(4), 0.1).w == w);
    CHECK(eg_update(w, VectorXd::Constant(4, 3.7), 0.1).w == w);

    VectorXd half = VectorXd::Constant(2, 0.5);
    VectorXd g(2);
    g << 1, 0;
    EgResult r = eg_update(half, g, 0.1);
    CHECK(r.reached);
    CHECK(std::abs((r.w - half).norm() - 0.1) < 1e-8);
    CHECK(r.w[0] > 0.5);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + trial % 10;
        VectorXd wp = random_mixture(rng, k);
        VectorXd gg(k);
        for (int i = 0; i < k; ++i) gg[i] = n(rng);
        const double eps = 0.01 + 0.09 * (trial % 7) / 6.0;
        EgResult e = eg_update(wp, gg, eps);
        check_mixture(e.w);
        if (e.reached) {
            CHECK(std::abs((e.w - wp).norm() - eps) < 1e-8);
            // Same direction after adding a constant to the gradient.
            EgResult shifted = eg_update(wp, (gg.array() + 5.0).matrix(), eps);
            CHECK((shifted.w - e.w).cwiseAbs().maxCoeff() < 1e-8);
        }
    }

    EgResult far = eg_update(half, g, 0.8);
    CHECK_FALSE(far.reached);
    CHECK(far.eta == 1e3);
}

TEST_CASE("feasible_search: identity, bounds and determinism") {
    const int k = 4;
    VectorXd n0(k), pool(k);
    n0 << 30, 10, 20, 40;
    pool << 50, 50, 5, 50;
    const double n = 150.0;  // B = 50
    MixtureBounds b = mixture_bounds(n0, pool, n);
    CHECK_FALSE(b.relaxed);
    std::mt19937_64 rng(6);
    MatrixXd r = random_similarity(rng, k);
    VectorXd pi = VectorXd::Constant(k, 0.25);
    PredictorParams p{VectorXd::Constant(k, 0.05), -0.01, 1.0};
    SurrogateContext ctx{&p, &r, &pi, &n0, n};
    VectorXd prev = n0 / n0.sum();
    prev = project_feasible(prev, b);
    REQUIRE(is_feasible(prev, b));

    VectorXd ok(k);
    ok << 0.25, 0.15, 0.15, 0.45;
    REQUIRE(is_feasible(ok, b));
    FeasibleResult id = feasible_search(ok, prev, b, ctx, 1);
    CHECK(id.method == FeasibleMethod::Identity);
    CHECK(id.w == ok);

    VectorXd bad(k);
    bad << 0.1, 0.3, 0.3, 0.3;  // w_1 N = 15 < 30 and w_3 N = 45 > 25
    FeasibleResult fixed = feasible_search(bad, prev, b, ctx, 9);
    CHECK(fixed.method != FeasibleMethod::Identity);
    CHECK(is_feasible(fixed.w, b));
    CHECK(fixed.w[0] * n >= n0[0] - 1e-9);
    FeasibleResult again = feasible_search(bad, prev, b, ctx, 9);
    CHECK(again.w == fixed.w);

    FeasibleResult proj = feasible_search(bad, prev, b, ctx, 9, 0);
    CHECK(proj.method == FeasibleMethod::Projection);
    CHECK(is_feasible(proj.w, b));

    for (int trial = 0; trial < 100; ++trial) {
        VectorXd c = random_mixture(rng, k, 4.0);
        CHECK(is_feasible(project_feasible(c, b), b));
    }

    MixtureBounds tight = mixture_bounds(n0, VectorXd::Constant(k, 1.0), n);
    CHECK(tight.relaxed);
}

TEST_CASE("augmentation_sizes: arithmetic and budget property") {
    VectorXd w(2);
    w << 0.55, 0.45;
    CHECK(augmentation_sizes(w, {40, 40}, 100, 20) == std::vector<std::int64_t>{15, 5});
    VectorXd wz(2);
    wz << 0.5, 0.5;
    CHECK(augmentation_sizes(wz, {50, 50}, 100, 0) == std::vector<std::int64_t>{0, 0});
    VectorXd wh(2);
    wh << 0.425, 0.575;
    CHECK(augmentation_sizes(wh, {80, 80}, 200, 40) == std::vector<std::int64_t>{5, 35});
    // Ties at .5 go to the even neighbour: 2.5 -> 2, 3.5 -> 4.
    VectorXd w4(4);
    w4 << 0.25, 0.35, 0.2, 0.2;
    CHECK(augmentation_sizes(w4, {2, 2, 2, 2}, 10, 2) == std::vector<std::int64_t>{0, 2, 0, 0});
    // Short by one: the largest remainder (3.34) takes it.
    VectorXd w3(3);
    w3 << 0.333, 0.333, 0.334;
    CHECK(augmentation_sizes(w3, {0, 0, 0}, 10, 10) == std::vector<std::int64_t>{3, 3, 4});
    // Over by four: only clusters with a positive size can give units back.
    VectorXd wo(2);
    wo << 0.3, 0.7;
    CHECK(augmentation_sizes(wo, {10, 0}, 20, 10) == std::vector<std::int64_t>{0, 10});

    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 2 + trial % 9;
        std::vector<std::int64_t> n0(static_cast<std::size_t>(k));
        VectorXd n0v(k);
        std::int64_t n0sum = 0;
        for (int j = 0; j < k; ++j) {
            n0[static_cast<std::size_t>(j)] = 5 + static_cast<std::int64_t>(rng() % 50);
            n0v[j] = static_cast<double>(n0[static_cast<std::size_t>(j)]);
            n0sum += n0[static_cast<std::size_t>(j)];
        }
        const std::int64_t budget = static_cast<std::int64_t>(rng() % 300);
        const std::int64_t n = n0sum + budget;
        MixtureBounds b = mixture_bounds(n0v, VectorXd::Constant(k, 1e9), static_cast<double>(n));
        VectorXd wf = project_feasible(random_mixture(rng, k), b);
        auto d = augmentation_sizes(wf, n0, n, budget);
        std::int64_t s = 0;
        for (auto x : d) {
            CHECK(x >= 0);
            s += x;
        }
        CHECK(s == budget);
    }
}

TEST_CASE("gains: normalization rules") {
    VectorXd d(3);
    d << 0.2, -0.1, 0.1;
    VectorXd a = gains_from_delta(d);
    CHECK(a[0] == 1.0);
    CHECK(a[1] == 0.0);
    CHECK(a[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gains_from_delta(VectorXd::Constant(4, 0.3)) == VectorXd::Ones(4));
    CHECK(gains_from_delta(-VectorXd::Ones(3)) == VectorXd::Zero(3));
    CHECK((gains_from_delta(7.5 * d) - a).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("best_round: warm start picks the highest calibrated score") {
    VectorXd pi(2);
    pi << 0.5, 0.5;
    std::vector<RoundObservation> h{{VectorXd::Constant(2, 0.5), VectorXd::Constant(2, 0.4), {}},
                                    {VectorXd::Constant(2, 0.5), VectorXd::Constant(2, 0.6), {}},
                                    {VectorXd::Constant(2, 0.5), VectorXd::Constant(2, 0.6), {}}};
    CHECK(best_round(h, pi) == 1);
}
