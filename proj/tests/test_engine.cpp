#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "autoscale/engine.hpp"
#include "autoscale/metrics.hpp"

using namespace autoscale;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    std::shared_ptr<sim::World> world;
    EngineConfig cfg;
    Workspace ws;
};

Fixture& fixture() {
    static Fixture f = [] {
        Fixture x;
        sim::WorldSpec spec = sim::default_world_spec(11);
        spec.n_real = 160;
        spec.n_pool = 480;
        spec.n_cal = 80;
        x.world = std::make_shared<sim::World>(sim::generate_world(spec));
        x.cfg.budget = 60;
        x.cfg.rounds = 4;
        x.cfg.seed = 5;
        x.cfg.embedding.steps = 10;
        x.ws = prepare(x.world->real, x.world->pool, x.world->cal, x.cfg);
        return x;
    }();
    return f;
}

fs::path scratch(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "autoscale_test_engine";
    fs::create_directories(d);
    fs::path p = d / name;
    fs::remove(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("workspace: clusters cover every token and counts add up") {
    Fixture& f = fixture();
    CHECK(f.ws.k() == 8);
    CHECK(f.ws.cl_real.size() == f.world->real.size());
    CHECK(f.ws.cl_pool.size() == f.world->pool.size());
    CHECK(f.ws.cl_cal.size() == f.world->cal.size());
    CHECK(f.ws.n0_total() == doctest::Approx(160.0));
    CHECK(f.ws.pool_counts.sum() == doctest::Approx(480.0));
    CHECK(f.ws.pi.sum() == doctest::Approx(1.0));
}

TEST_CASE("run: one round means round 0 and a pure retrieval round") {
    Fixture& f = fixture();
    EngineConfig c = f.cfg;
    c.rounds = 1;
    sim::GroundTruthOracle o(f.world);
    auto recs = run(f.ws, o, c);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].selected.empty());
    CHECK(recs[1].selected.size() == 60);
    CHECK_FALSE(recs[1].predictor);
    CHECK_FALSE(recs[1].gains);
}

TEST_CASE("run: budget, disjointness, real preservation and warm starts") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    auto recs = run(f.ws, o, f.cfg);
    REQUIRE(recs.size() == 5);
    const auto real_ids = f.world->real.ids();
    const std::set<std::string> real(real_ids.begin(), real_ids.end());
    std::vector<RoundObservation> history;
    for (const auto& r : recs) {
        CHECK(r.mixture.sum() == doctest::Approx(1.0));
        CHECK(r.overall >= 0.0);
        CHECK(r.overall <= 1.0);
        if (r.round > 0) {
            CHECK(r.selected.size() == 60);
            std::set<std::string> uniq(r.selected.begin(), r.selected.end());
            CHECK(uniq.size() == r.selected.size());
            for (const auto& id : r.selected) {
                CHECK(f.world->pool.contains(id));
                CHECK(real.count(id) == 0);
                CHECK_FALSE(f.world->cal.contains(id));
            }
            std::int64_t total = 0;
            for (auto c : r.realized_counts) total += c;
            CHECK(total == 60);
            // Every round trains on the whole real set plus the selection.
            Evaluation ev = evaluate_training_set(f.ws, o, r.selected);
            CHECK(ev.overall == r.overall);
        }
        if (r.round >= 2) {
            REQUIRE(r.warm_start);
            CHECK(*r.warm_start == best_round(history, f.ws.pi));
            REQUIRE(r.predictor);
            REQUIRE(r.gains);
            CHECK(r.gains->size() == 8);
            REQUIRE(r.delta);
            std::int64_t d = 0;
            for (auto x : *r.delta) d += x;
            CHECK(d == 60);
        }
        history.push_back(r.observation());
    }
}

TEST_CASE("run: identical config and seed give byte-identical logs") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    const fs::path a = scratch("det_a.jsonl"), b = scratch("det_b.jsonl");
    run(f.ws, o, f.cfg, {a, {}, -1});
    run(f.ws, o, f.cfg, {b, {}, -1});
    CHECK(slurp(a) == slurp(b));
    CHECK_FALSE(slurp(a).empty());
}

TEST_CASE("resume: interrupted run reproduces the uninterrupted log") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    const fs::path golden = scratch("golden.jsonl"), cut = scratch("cut.jsonl");
    run(f.ws, o, f.cfg, {golden, {}, -1});
    auto partial = run(f.ws, o, f.cfg, {cut, {}, 2});
    CHECK(partial.size() == 3);
    CHECK(read_round_log(cut).size() == 3);
    auto done = resume(f.ws, o, f.cfg, cut);
    CHECK(done.size() == 5);
    CHECK(slurp(cut) == slurp(golden));

    // A complete log is left untouched.
    const std::string before = slurp(golden);
    auto again = resume(f.ws, o, f.cfg, golden);
    CHECK(again.size() == 5);
    CHECK(slurp(golden) == before);
}

TEST_CASE("resume: truncated final line is a parse error naming the line") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    const fs::path p = scratch("trunc.jsonl");
    run(f.ws, o, f.cfg, {p, {}, 2});
    std::string text = slurp(p);
    text.resize(text.size() - 15);
    std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
    try {
        resume(f.ws, o, f.cfg, p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
}

TEST_CASE("resume: a log from another method is rejected") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    const fs::path p = scratch("other.jsonl");
    EngineConfig c = f.cfg;
    c.method = Method::Uniform;
    run(f.ws, o, c, {p, {}, 0});
    CHECK_THROWS_AS(resume(f.ws, o, f.cfg, p), std::invalid_argument);
}

TEST_CASE("baselines run round 0 plus a single selection round") {
    Fixture& f = fixture();
    sim::GroundTruthOracle o(f.world);
    for (Method m : {Method::Uniform, Method::Iwr, Method::Chameleon}) {
        EngineConfig c = f.cfg;
        c.method = m;
        auto recs = run(f.ws, o, c);
        REQUIRE(recs.size() == 2);
        CHECK(recs[1].method == to_string(m));
        CHECK(recs[1].selected.size() == 60);
        CHECK(run(f.ws, o, c).back().selected == recs[1].selected);
    }
}

TEST_CASE("round records survive a JSON round trip, NaN as null") {
    RoundRecord r;
    r.round = 3;
    r.method = "autoscale";
    r.mixture = Eigen::VectorXd::Constant(2, 0.5);
    r.cluster_scores = Eigen::Vector2d(0.25, std::numeric_limits<double>::quiet_NaN());
    r.missing = {false, true};
    r.overall = 0.125;
    r.selected = {"s1", "s2"};
    r.realized_counts = {1, 1};
    r.gains = Eigen::Vector2d(0.1, -0.2);
    r.eps = 0.05;
    r.timing = 12.0;
    const std::string line = round_log_line(r);
    CHECK(line.find("null") != std::string::npos);
    CHECK(line.find("timing") == std::string::npos);
    RoundRecord back = round_record_from_json(nlohmann::json::parse(line));
    CHECK(std::isnan(back.cluster_scores[1]));
    CHECK(back.cluster_scores[0] == 0.25);
    CHECK(*back.gains == *r.gains);
    CHECK(round_log_line(back) == line);
    CHECK_THROWS(round_record_from_json(nlohmann::json::parse(R"({"round": 0})")));
}

TEST_CASE("swap_experiment: identical oracles give J = 1 and a symmetric table") {
    Fixture& f = fixture();
    EngineConfig c = f.cfg;
    c.rounds = 2;
    sim::GroundTruthOracle a(f.world), b(f.world);
    SwapResult s = swap_experiment(f.ws, a, b, c);
    CHECK(s.jaccard == 1.0);
    CHECK(s.table(0, 1) == s.table(1, 0));
    CHECK(s.table(0, 0) == s.table(1, 1));
}

TEST_CASE("config validation") {
    EngineConfig c;
    CHECK_NOTHROW(c.validate());
    c.rounds = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.sigma = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(method_from_string("iwr") == Method::Iwr);
    CHECK_THROWS_AS(method_from_string("random"), std::invalid_argument);
}
