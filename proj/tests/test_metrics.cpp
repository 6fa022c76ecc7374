#include <doctest.h>

#include <random>

#include "autoscale/metrics.hpp"

using namespace autoscale;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("pdms: gates and the weighted sum") {
    SubscoreVector s;
    CHECK(pdms(s) == 1.0);
    s.nc = 0;
    CHECK(pdms(s) == 0.0);
    s = {};
    s.ep = 0.8;
    CHECK(pdms(s) == doctest::Approx(11.0 / 12.0).epsilon(1e-15));
    // DDC, TLC and the extended terms do not enter PDMS.
    s.ddc = 0;
    s.lk = 0;
    CHECK(pdms(s) == doctest::Approx(11.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("epdms: gates and the weighted sum") {
    SubscoreVector s;
    CHECK(epdms(s) == 1.0);
    for (double SubscoreVector::*gate : {&SubscoreVector::nc, &SubscoreVector::dac, &SubscoreVector::ddc, &SubscoreVector::tlc}) {
        SubscoreVector g;
        g.*gate = 0;
        CHECK(epdms(g) == 0.0);
    }
    s.ttc = 0.5;
    s.ec = 0;
    CHECK(epdms(s) == 0.71875);
    s.comf = 0;
    CHECK(epdms(s) == 0.71875);
}

TEST_CASE("scores reject components outside [0,1]") {
    SubscoreVector s;
    s.ep = 1.5;
    CHECK_THROWS_AS(pdms(s), std::invalid_argument);
    s.ep = -0.1;
    CHECK_THROWS_AS(epdms(s), std::invalid_argument);
    s.ep = std::nan("");
    CHECK_THROWS_AS(epdms(s), std::invalid_argument);
}

TEST_CASE("scores are bounded and monotone in every component") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        VectorXd v(SubscoreVector::kSize);
        for (int i = 0; i < v.size(); ++i) v[i] = u(rng);
        const SubscoreVector s = SubscoreVector::from_vector(v);
        const double p = pdms(s), e = epdms(s);
        CHECK(p >= 0);
        CHECK(p <= 1);
        CHECK(e >= 0);
        CHECK(e <= 1);
        const int j = static_cast<int>(rng() % SubscoreVector::kSize);
        VectorXd up = v;
        up[j] = v[j] + (1 - v[j]) * u(rng);
        const SubscoreVector su = SubscoreVector::from_vector(up);
        CHECK(pdms(su) >= p);
        CHECK(epdms(su) >= e);
    }
}

TEST_CASE("jaccard") {
    std::set<std::string> a{"a", "b", "c"}, b{"b", "c", "d"};
    CHECK(jaccard(a, a).value == 1.0);
    CHECK(jaccard(a, b).value == 0.5);
    CHECK(jaccard(b, a).value == 0.5);
    CHECK(jaccard(a, std::set<std::string>{"x"}).value == 0.0);
    JaccardResult e = jaccard(std::set<std::string>{}, std::set<std::string>{});
    CHECK(e.both_empty);
    CHECK(e.value == 1.0);
    CHECK(jaccard(std::vector<std::string>{"a", "a", "b"}, std::vector<std::string>{"b"}).value == 0.5);
    CHECK(jaccard_counts(57000, 143000) == doctest::Approx(0.399).epsilon(0.5e-3 / 0.399));
    CHECK_THROWS(jaccard_counts(5, 0));
}

TEST_CASE("r_squared against a direct sum") {
    VectorXd y(5), yhat(5);
    y << 1, 2, 3, 4, 6;
    yhat << 1.1, 1.9, 3.2, 3.7, 5.5;
    double mean = (1 + 2 + 3 + 4 + 6) / 5.0, sse = 0, sst = 0;
    for (int i = 0; i < 5; ++i) {
        sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    CHECK(r_squared(yhat, y) == doctest::Approx(1 - sse / sst).epsilon(1e-14));
    CHECK(r_squared(y, y) == 1.0);
    CHECK(r_squared(VectorXd::Constant(5, mean), y) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(r_squared(y, VectorXd::Constant(5, 2.0)), std::invalid_argument);
    CHECK_THROWS_AS(r_squared(VectorXd::Ones(1), VectorXd::Ones(1)), std::invalid_argument);
}

TEST_CASE("propagation_gain: kernel fit wins when the data carry cross-cluster transfer") {
    const int k = 4;
    MatrixXd r(k, k);
    r << 1.0, 0.8, 0.7, 0.6,
         0.8, 1.0, 0.8, 0.7,
         0.7, 0.8, 1.0, 0.8,
         0.6, 0.7, 0.8, 1.0;
    VectorXd n0(k);
    n0 << 400, 200, 100, 100;
    const double n_total = 1000;
    VectorXd beta(k);
    beta << 0.05, 0.08, 0.10, 0.06;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0, 0.002);
    std::gamma_distribution<double> gam(3.0, 1.0);
    std::vector<RoundObservation> history;
    VectorXd base = VectorXd::Constant(k, 0.5);
    for (int t = 0; t < 8; ++t) {
        VectorXd w(k);
        for (int j = 0; j < k; ++j) w[j] = gam(rng);
        w /= w.sum();
        RoundObservation o;
        o.w = w;
        o.s_bar = base + r * beta.cwiseProduct(w.array().log().matrix());
        for (int j = 0; j < k; ++j) o.s_bar[j] += noise(rng);
        history.push_back(o);
    }
    PropagationGain g = propagation_gain(history, r, n0, n_total, 1e-6);
    CHECK(g.samples == 28 * k);
    CHECK(g.r2_kernel > 0.9);
    CHECK(g.gain() > 0);
}
