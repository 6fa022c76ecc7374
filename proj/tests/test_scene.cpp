#include <doctest.h>

#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "autoscale/io.hpp"
#include "autoscale/scene.hpp"
#include "test_util.hpp"

using namespace autoscale;
using autoscale::testing::random_dataset;

TEST_CASE("validate_dataset: clean data has an empty report") {
    std::mt19937_64 rng(1);
    Dataset d = random_dataset(rng, 12, Provenance::Synthetic, "s");
    CHECK(validate_dataset(d).ok());
}

TEST_CASE("validate_dataset: a dynamic node of width 4 is one violation") {
    std::mt19937_64 rng(2);
    Dataset d = random_dataset(rng, 5, Provenance::Real, "r");
    auto& g = d.graphs.at("r3");
    g.nodes[1].sequence.conservativeResize(Eigen::NoChange, 4);
    auto rep = validate_dataset(d);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].token == "r3");
    CHECK(rep.violations[0].message.find("node 1") != std::string::npos);
}

TEST_CASE("validate_dataset: duplicates, missing graphs and non-finite values") {
    std::mt19937_64 rng(3);
    Dataset d = random_dataset(rng, 4, Provenance::Real, "r");
    d.tokens.push_back(d.tokens[0]);
    CHECK_FALSE(validate_dataset(d).ok());

    Dataset e = random_dataset(rng, 4, Provenance::Real, "r");
    e.graphs.erase("r1");
    CHECK_FALSE(validate_dataset(e).ok());

    Dataset f = random_dataset(rng, 4, Provenance::Real, "r");
    f.graphs.at("r2").nodes[0].sequence(0, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(validate_dataset(f).ok());
}

TEST_CASE("validate_pools: calibration id shared with the pool") {
    std::mt19937_64 rng(4);
    Dataset real = random_dataset(rng, 4, Provenance::Real, "r");
    Dataset syn = random_dataset(rng, 4, Provenance::Synthetic, "s");
    Dataset cal = random_dataset(rng, 3, Provenance::Calibration, "c");
    CHECK(validate_pools(real, syn, cal).ok());
    SceneToken dup{"s2", Provenance::Calibration};
    cal.tokens.push_back(dup);
    cal.graphs["s2"] = syn.graphs.at("s2");
    cal.labels["s2"] = syn.labels.at("s2");
    auto rep = validate_pools(real, syn, cal);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].token == "s2");
}

namespace {

void check_partition(const Dataset& pool, const CalibrationSplit& s) {
    std::set<std::string> seen;
    for (const auto& t : s.calibration.tokens) CHECK(seen.insert(t.id).second);
    for (const auto& t : s.remainder.tokens) CHECK(seen.insert(t.id).second);
    CHECK(seen.size() == pool.size());
    for (const auto& t : pool.tokens) CHECK(seen.count(t.id) == 1);
}

}  // namespace

TEST_CASE("split_calibration: exact stratified counts and determinism") {
    std::mt19937_64 rng(5);
    Dataset pool = random_dataset(rng, 100, Provenance::Synthetic, "s");
    std::map<std::string, int> cl;
    for (std::size_t i = 0; i < pool.size(); ++i) cl[pool.tokens[i].id] = static_cast<int>(i % 2);
    auto s = split_calibration(pool, 0.2, cl, 9);
    int per[2] = {0, 0};
    for (const auto& t : s.calibration.tokens) ++per[cl.at(t.id)];
    CHECK(per[0] == 10);
    CHECK(per[1] == 10);
    check_partition(pool, s);
    CHECK(split_calibration(pool, 0.2, cl, 9).calibration.ids() == s.calibration.ids());
    for (const auto& t : s.calibration.tokens) CHECK(t.provenance == Provenance::Calibration);
}

TEST_CASE("split_calibration: singleton cluster rounds toward the remainder") {
    std::mt19937_64 rng(6);
    Dataset pool = random_dataset(rng, 11, Provenance::Synthetic, "s");
    std::map<std::string, int> cl;
    for (std::size_t i = 0; i < pool.size(); ++i) cl[pool.tokens[i].id] = i == 10 ? 1 : 0;
    auto s = split_calibration(pool, 0.2, cl, 1);
    for (const auto& t : s.calibration.tokens) CHECK(cl.at(t.id) == 0);
    CHECK(s.calibration.size() == 2);
    check_partition(pool, s);
}

TEST_CASE("split_calibration: per-cluster share within one token, random sizes") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Dataset pool = random_dataset(rng, 40 + trial, Provenance::Synthetic, "s");
        std::map<std::string, int> cl;
        std::uniform_int_distribution<int> k(0, 4);
        for (const auto& t : pool.tokens) cl[t.id] = k(rng);
        const double f = 0.1 + 0.04 * trial;
        auto s = split_calibration(pool, f, cl, static_cast<std::uint64_t>(trial));
        std::map<int, int> size, got;
        for (auto& [id, c] : cl) ++size[c];
        for (const auto& t : s.calibration.tokens) ++got[cl.at(t.id)];
        for (auto& [c, n] : size) CHECK(std::abs(got[c] - f * n) <= 1.0);
        check_partition(pool, s);
    }
}

TEST_CASE("split_calibration: fraction outside (0,1) throws") {
    std::mt19937_64 rng(8);
    Dataset pool = random_dataset(rng, 4, Provenance::Synthetic, "s");
    std::map<std::string, int> cl;
    for (const auto& t : pool.tokens) cl[t.id] = 0;
    CHECK_THROWS_AS(split_calibration(pool, 0.0, cl, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_calibration(pool, 1.0, cl, 1), std::invalid_argument);
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
    CHECK(wrap_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(0.5) == 0.5);
}

TEST_CASE("dataset JSONL round-trips bit-exactly") {
    std::mt19937_64 rng(9);
    Dataset d = random_dataset(rng, 6, Provenance::Synthetic, "s");
    std::stringstream ss;
    write_dataset_jsonl(d, ss);
    Dataset back = read_dataset_jsonl(ss);
    REQUIRE(back.size() == d.size());
    for (const auto& t : d.tokens) {
        const auto& a = d.graphs.at(t.id);
        const auto& b = back.graphs.at(t.id);
        REQUIRE(a.nodes.size() == b.nodes.size());
        for (std::size_t i = 0; i < a.nodes.size(); ++i) CHECK(a.nodes[i].sequence == b.nodes[i].sequence);
        for (std::size_t i = 0; i < a.edges.size(); ++i) CHECK(a.edges[i].sequence == b.edges[i].sequence);
        CHECK(d.metrics.count(t.id) == back.metrics.count(t.id));
        CHECK(d.labels.at(t.id).joint() == back.labels.at(t.id).joint());
    }
    std::stringstream again;
    write_dataset_jsonl(back, again);
    std::stringstream first;
    write_dataset_jsonl(d, first);
    CHECK(again.str() == first.str());
}

TEST_CASE("dataset JSONL: a broken line names its number") {
    std::mt19937_64 rng(10);
    Dataset d = random_dataset(rng, 3, Provenance::Real, "r");
    std::stringstream ss;
    write_dataset_jsonl(d, ss);
    std::string text = ss.str();
    text.resize(text.size() - 20);
    std::stringstream in(text);
    try {
        read_dataset_jsonl(in, "x.jsonl");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(e.file() == "x.jsonl");
    }
}

TEST_CASE("csv quoting and float formatting") {
    std::stringstream ss;
    CsvWriter w(ss);
    w.field("a,b").field("say \"hi\"").field(0.1).field(7).end_row();
    CHECK(ss.str() == "\"a,b\",\"say \"\"hi\"\"\",0.1,7\r\n");
    auto rows = read_csv(ss);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == std::vector<std::string>{"a,b", "say \"hi\"", "0.1", "7"});
}
