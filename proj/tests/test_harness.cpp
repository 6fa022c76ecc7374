#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "autoscale/harness.hpp"
#include "autoscale/scene.hpp"

using namespace autoscale;
using namespace autoscale::sim;
using Eigen::VectorXd;

namespace {

WorldSpec small_spec(std::uint64_t seed) {
    WorldSpec s = default_world_spec(seed);
    s.n_real = 80;
    s.n_pool = 160;
    s.n_cal = 40;
    return s;
}

std::vector<std::string> of_archetype(const World& w, const Dataset& d, int arch) {
    std::vector<std::string> out;
    for (const auto& t : d.tokens)
        if (w.archetype_of.at(t.id) == arch) out.push_back(t.id);
    return out;
}

}  // namespace

TEST_CASE("generate_world: counts, validity, imbalance and fresh ids per seed") {
    World w = generate_world(small_spec(1));
    CHECK(w.real.size() == 80);
    CHECK(w.pool.size() == 160);
    CHECK(w.cal.size() == 40);
    CHECK(validate_dataset(w.real).ok());
    CHECK(validate_dataset(w.pool).ok());
    CHECK(validate_dataset(w.cal).ok());
    CHECK(validate_pools(w.real, w.pool, w.cal).ok());
    CHECK(w.real.count(Provenance::Real) == 80);
    CHECK(w.pool.count(Provenance::Synthetic) == 160);
    CHECK(w.cal.count(Provenance::Calibration) == 40);

    // Real share follows the world spec: largest archetype 24 of 80, smallest 2.
    CHECK(of_archetype(w, w.real, 0).size() == 24);
    CHECK(of_archetype(w, w.real, 7).size() == 2);
    for (int a = 0; a < kArchetypeCount; ++a) {
        CHECK(of_archetype(w, w.pool, a).size() == 20);
        CHECK(of_archetype(w, w.cal, a).size() == 5);
    }

    World w2 = generate_world(small_spec(2));
    const auto real_ids = w.real.ids();
    std::set<std::string> ids1(real_ids.begin(), real_ids.end());
    for (const auto& id : w2.real.ids()) CHECK(ids1.count(id) == 0);
    CHECK(w2.real.graphs.begin()->second.t_len == w.real.graphs.begin()->second.t_len);

    World again = generate_world(small_spec(1));
    CHECK(again.pool.ids() == w.pool.ids());
}

TEST_CASE("make_scene: every archetype yields a valid graph with one ego") {
    std::mt19937_64 rng(3);
    for (int a = 0; a < kArchetypeCount; ++a)
        for (int rep = 0; rep < 5; ++rep) {
            SemanticLabels lab;
            SubscoreVector met;
            SceneGraph g = make_scene(static_cast<Archetype>(a), rng, lab, met);
            CHECK(validate_graph(g, "x").empty());
            CHECK(g.ego_index() >= 0);
            const VectorXd m = met.as_vector();
            CHECK(m.minCoeff() >= 0.0);
            CHECK(m.maxCoeff() <= 1.0);
        }
}

TEST_CASE("oracle: scores in [0,1] covering every calibration token") {
    auto w = std::make_shared<World>(generate_world(small_spec(4)));
    GroundTruthOracle o(w);
    auto h = o.train(w->real.ids());
    auto s = o.evaluate(h, w->cal);
    CHECK(s.size() == w->cal.size());
    for (const auto& [id, v] : s) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(o.evaluate(h, w->cal) == s);
}

TEST_CASE("oracle: identity transfer, adding archetype data raises its score") {
    WorldSpec spec = small_spec(5);
    spec.transfer = Eigen::MatrixXd::Identity(8, 8);
    spec.g = 0.0;
    auto w = std::make_shared<World>(generate_world(spec));
    GroundTruthOracle o(w);
    for (int a = 0; a < kArchetypeCount; ++a) {
        std::vector<std::string> train = w->real.ids();
        VectorXd before = o.archetype_scores(train);
        auto extra = of_archetype(*w, w->pool, a);
        train.insert(train.end(), extra.begin(), extra.end());
        VectorXd after = o.archetype_scores(train);
        CHECK(after[a] > before[a]);
        for (int j = 0; j < kArchetypeCount; ++j)
            if (j != a) CHECK(after[j] == before[j]);
    }
}

TEST_CASE("oracle: zero noise gives identical scores, b = g = 0 is constant") {
    WorldSpec spec = small_spec(6);
    spec.noise_sigma = 0.0;
    auto w = std::make_shared<World>(generate_world(spec));
    GroundTruthOracle o(w);
    auto ids = w->real.ids();
    auto s1 = o.evaluate(o.train(ids), w->cal);
    std::reverse(ids.begin(), ids.end());
    CHECK(o.evaluate(o.train(ids), w->cal) == s1);

    WorldSpec flat = spec;
    flat.b.assign(8, 0.0);
    flat.g = 0.0;
    GroundTruthOracle c(w, flat);
    auto pool = w->pool.ids();
    std::vector<std::string> half(pool.begin(), pool.begin() + 60);
    for (const auto& training : {w->real.ids(), half, pool}) {
        auto s = c.evaluate(c.train(training), w->cal);
        for (const auto& [id, v] : s) CHECK(v == doctest::Approx(flat.a[static_cast<std::size_t>(w->archetype_of.at(id))]).epsilon(1e-15));
    }
}

TEST_CASE("oracle: tokens from another world are rejected") {
    auto w = std::make_shared<World>(generate_world(small_spec(7)));
    World other = generate_world(small_spec(8));
    GroundTruthOracle o(w);
    CHECK_THROWS_AS(o.train({other.pool.tokens[0].id}), std::invalid_argument);
    auto h = o.train(w->real.ids());
    CHECK_THROWS_AS(o.evaluate(h, other.cal), std::invalid_argument);
}

TEST_CASE("oracle_pair_specs: weakest archetypes differ, identical specs agree") {
    WorldSpec base = small_spec(9);
    auto [a, b] = oracle_pair_specs(base);
    auto argmin = [](const std::vector<double>& v) { return std::min_element(v.begin(), v.end()) - v.begin(); };
    CHECK(argmin(a.a) != argmin(b.a));
    // Lowest-quarter archetypes are disjoint.
    auto weak = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int x, int y) { return v[static_cast<std::size_t>(x)] < v[static_cast<std::size_t>(y)]; });
        return std::set<int>(idx.begin(), idx.begin() + 2);
    };
    for (int x : weak(a.a)) CHECK(weak(b.a).count(x) == 0);

    auto w = std::make_shared<World>(generate_world(base));
    GroundTruthOracle o1(w, a), o2(w, a);
    auto ids = w->real.ids();
    CHECK(o1.evaluate(o1.train(ids), w->cal) == o2.evaluate(o2.train(ids), w->cal));

    WorldSpec one = base;
    one.archetypes = 1;
    one.real_share.clear();
    one.a.clear();
    one.b.clear();
    one.m0.clear();
    one.transfer.resize(0, 0);
    CHECK_THROWS_AS(oracle_pair_specs(one), std::invalid_argument);
}

TEST_CASE("world spec validation") {
    WorldSpec s = default_world_spec(0);
    s.a[2] = 1.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = default_world_spec(0);
    s.transfer(0, 1) = 2.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = default_world_spec(0);
    s.b.pop_back();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("transfer_history: shapes and mixtures") {
    TransferHistory th = transfer_history(3);
    CHECK(th.history.size() == 8);
    CHECK(th.r.rows() == 8);
    CHECK(th.r.diagonal().isOnes(1e-12));
    for (const auto& o : th.history) {
        CHECK(o.w.sum() == doctest::Approx(1.0));
        CHECK(o.w.minCoeff() >= 0.0);
    }
}

TEST_CASE("seed_mix and hash_token_set are stable and spread") {
    CHECK(seed_mix(1, 2) == seed_mix(1, 2));
    CHECK(seed_mix(1, 2) != seed_mix(2, 1));
    CHECK(hash_token_set({"a", "b"}) != hash_token_set({"ab"}));
    CHECK(hash_token_set({}) == hash_token_set({}));
}
