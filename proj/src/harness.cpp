#include "autoscale/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "autoscale/analytics.hpp"

namespace autoscale {

std::uint64_t hash_token_set(const std::vector<std::string>& sorted_ids) {
    // FNV-1a over ids with a separator byte.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& id : sorted_ids) {
        for (unsigned char c : id) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace autoscale

namespace autoscale::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kDt = 0.5;
constexpr int kLen = 12;
constexpr int kHist = 8;
constexpr int kNow = kHist - 1;

double uni(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double gauss(std::mt19937_64& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }

struct Pose {
    double x, y, th, k, v;
};

// Integrates speed and curvature profiles, then re-expresses every pose in
// the ego frame at the current step.
std::vector<Pose> integrate(const std::vector<double>& v, const std::vector<double>& k) {
    std::vector<Pose> p(kLen);
    double x = 0, y = 0, th = 0;
    for (int t = 0; t < kLen; ++t) {
        p[t] = {x, y, th, k[t], v[t]};
        th += v[t] * k[t] * kDt;
        x += v[t] * std::cos(th) * kDt;
        y += v[t] * std::sin(th) * kDt;
    }
    const Pose now = p[kNow];
    const double c = std::cos(-now.th), s = std::sin(-now.th);
    for (auto& q : p) {
        const double dx = q.x - now.x, dy = q.y - now.y;
        q = {c * dx - s * dy, s * dx + c * dy, q.th - now.th, q.k, q.v};
    }
    return p;
}

Pose offset(const Pose& p, double along, double lateral) {
    const double c = std::cos(p.th), s = std::sin(p.th);
    return {p.x + c * along - s * lateral, p.y + s * along + c * lateral, p.th, p.k, p.v};
}

Node dynamic_node(NodeKind kind, const std::vector<Pose>& p) {
    Node n{kind, MatrixXd(kLen, kDynamicWidth)};
    for (int t = 0; t < kLen; ++t) n.sequence.row(t) << p[t].x, p[t].y, wrap_angle(p[t].th), p[t].k, p[t].v;
    return n;
}

Node map_node(NodeKind kind, const std::vector<Pose>& p) {
    Node n{kind, MatrixXd(kLen, kMapWidth)};
    for (int t = 0; t < kLen; ++t) n.sequence.row(t) << p[t].x, p[t].y, wrap_angle(p[t].th), p[t].k;
    return n;
}

// Road polyline: the ego path shifted sideways.
std::vector<Pose> lane_line(const std::vector<Pose>& ego, double lateral) {
    std::vector<Pose> out(kLen);
    for (int t = 0; t < kLen; ++t) out[t] = offset(ego[t], 0.0, lateral);
    return out;
}

std::vector<Pose> crossing_line(double ahead, double width) {
    std::vector<Pose> out(kLen);
    for (int t = 0; t < kLen; ++t) {
        const double y = -width / 2 + width * t / (kLen - 1);
        out[t] = {ahead, y, std::numbers::pi / 2, 0.0, 0.0};
    }
    return out;
}

std::vector<Pose> follower(const std::vector<Pose>& ego, double gap, double lateral, double rel_speed, double heading_flip) {
    std::vector<Pose> out(kLen);
    for (int t = 0; t < kLen; ++t) {
        const double along = gap + rel_speed * kDt * (t - kNow);
        Pose q = offset(ego[t], along, lateral);
        q.v = std::max(0.0, ego[t].v + rel_speed);
        if (heading_flip != 0) {
            q.th += heading_flip;
            q.v = std::max(0.0, ego[t].v);
        }
        out[t] = q;
    }
    return out;
}

std::vector<Pose> pedestrian(double ahead, double y0, double dir) {
    std::vector<Pose> out(kLen);
    for (int t = 0; t < kLen; ++t) out[t] = {ahead, y0 + dir * 1.3 * kDt * (t - kNow), dir * std::numbers::pi / 2, 0.0, 1.3};
    return out;
}

}  // namespace

std::string_view to_string(Archetype a) {
    switch (a) {
        case Archetype::Cruise: return "cruise";
        case Archetype::DenseFollow: return "dense_follow";
        case Archetype::LaneChange: return "lane_change";
        case Archetype::LeftTurn: return "left_turn";
        case Archetype::RightTurn: return "right_turn";
        case Archetype::StopAtCrossing: return "stop_at_crossing";
        case Archetype::Roundabout: return "roundabout";
        case Archetype::UTurn: return "u_turn";
    }
    return "?";
}

SceneGraph make_scene(Archetype a, std::mt19937_64& rng, SemanticLabels& labels, SubscoreVector& metrics) {
    std::vector<double> v(kLen), k(kLen, 0.0);
    std::vector<std::vector<Pose>> agents;
    std::vector<std::pair<NodeKind, std::vector<Pose>>> maps;
    bool crossing = false;
    double crossing_at = 0;

    switch (a) {
        case Archetype::Cruise: {
            const double s = uni(rng, 10, 14);
            for (int t = 0; t < kLen; ++t) {
                v[t] = s + gauss(rng, 0.2);
                k[t] = gauss(rng, 0.002);
            }
            break;
        }
        case Archetype::DenseFollow: {
            const double s = uni(rng, 3, 6);
            for (int t = 0; t < kLen; ++t) {
                v[t] = std::max(0.5, s + 0.8 * std::sin(t * 0.9) + gauss(rng, 0.1));
                k[t] = gauss(rng, 0.002);
            }
            break;
        }
        case Archetype::LaneChange: {
            const double s = uni(rng, 8, 12), amp = (rng() % 2 ? 1 : -1) * uni(rng, 0.015, 0.025);
            for (int t = 0; t < kLen; ++t) {
                v[t] = s + gauss(rng, 0.2);
                k[t] = t >= 4 ? amp * std::sin(2 * std::numbers::pi * (t - 4) / 8.0) : 0.0;
            }
            break;
        }
        case Archetype::LeftTurn:
        case Archetype::RightTurn: {
            const double s = uni(rng, 4, 7), kk = uni(rng, 0.08, 0.14) * (a == Archetype::LeftTurn ? 1 : -1);
            for (int t = 0; t < kLen; ++t) {
                v[t] = s + gauss(rng, 0.1);
                k[t] = t >= 6 ? kk : gauss(rng, 0.002);
            }
            crossing = true;
            crossing_at = uni(rng, 4, 8);
            break;
        }
        case Archetype::StopAtCrossing: {
            const double s = uni(rng, 6, 9);
            for (int t = 0; t < kLen; ++t) {
                v[t] = std::max(0.0, s * (1.0 - static_cast<double>(t) / 10.0));
                k[t] = gauss(rng, 0.001);
            }
            crossing = true;
            crossing_at = uni(rng, 6, 10);
            break;
        }
        case Archetype::Roundabout: {
            const double s = uni(rng, 5, 8), kk = uni(rng, 0.05, 0.08);
            for (int t = 0; t < kLen; ++t) {
                v[t] = s + gauss(rng, 0.1);
                k[t] = kk + gauss(rng, 0.003);
            }
            break;
        }
        case Archetype::UTurn: {
            const double s = uni(rng, 2, 4), kk = uni(rng, 0.25, 0.35);
            for (int t = 0; t < kLen; ++t) {
                v[t] = s + gauss(rng, 0.1);
                k[t] = t >= 5 ? kk : gauss(rng, 0.002);
            }
            break;
        }
    }
    const std::vector<Pose> ego = integrate(v, k);

    const double lane = 3.5;
    maps.push_back({NodeKind::MapDivider, lane_line(ego, lane / 2)});
    maps.push_back({NodeKind::MapBoundary, lane_line(ego, -lane / 2)});
    if (a == Archetype::Cruise || a == Archetype::LaneChange || a == Archetype::DenseFollow)
        maps.push_back({NodeKind::MapBoundary, lane_line(ego, lane * 1.5)});
    if (crossing) maps.push_back({NodeKind::MapPedCrossing, crossing_line(crossing_at, 8.0)});

    const int n_agents = [&] {
        switch (a) {
            case Archetype::DenseFollow: return 4 + static_cast<int>(rng() % 3);
            case Archetype::Cruise:
            case Archetype::LaneChange: return 1 + static_cast<int>(rng() % 3);
            case Archetype::UTurn: return static_cast<int>(rng() % 2);
            default: return 1 + static_cast<int>(rng() % 2);
        }
    }();
    for (int i = 0; i < n_agents; ++i) {
        switch (a) {
            case Archetype::DenseFollow:
                agents.push_back(follower(ego, 6.0 + 7.0 * i + uni(rng, -1, 1), (i % 2) * lane, uni(rng, -0.5, 0.5), 0));
                break;
            case Archetype::LeftTurn:
            case Archetype::RightTurn:
            case Archetype::UTurn:
                agents.push_back(follower(ego, uni(rng, 12, 25), -lane, uni(rng, -1, 1), std::numbers::pi));
                break;
            case Archetype::StopAtCrossing:
                agents.push_back(pedestrian(crossing_at + uni(rng, -1, 1), uni(rng, -4, 4), i % 2 ? 1.0 : -1.0));
                break;
            default:
                agents.push_back(follower(ego, uni(rng, 10, 30), (rng() % 2) * lane, uni(rng, -2, 2), 0));
        }
    }

    SceneGraph g;
    g.t_len = kLen;
    g.t_hist = kHist;
    g.t_fut = kLen - kHist;
    g.nodes.push_back(dynamic_node(NodeKind::Ego, ego));
    for (const auto& ag : agents) g.nodes.push_back(dynamic_node(NodeKind::DynamicAgent, ag));
    const int first_map = static_cast<int>(g.nodes.size());
    for (const auto& [kind, pts] : maps) g.nodes.push_back(map_node(kind, pts));

    const int n = static_cast<int>(g.nodes.size());
    for (int i = 1; i < n; ++i) g.edges.push_back({EdgeKind::AllToEgo, i, 0, {}});
    for (int i = 1; i < first_map; ++i)
        for (int j = 1; j < first_map; ++j)
            if (i != j) g.edges.push_back({EdgeKind::DynamicToDynamic, i, j, {}});
    for (int m = first_map; m < n; ++m)
        for (int i = 1; i < first_map; ++i) g.edges.push_back({EdgeKind::MapToDynamic, m, i, {}});
    rebuild_edge_features(g);

    // Labels from ego geometry.
    const double turn = ego[kLen - 1].th - ego[kNow].th;
    if (ego[kLen - 1].v < 1.0)
        labels.command = Command::Stop;
    else if (turn > 0.35)
        labels.command = Command::Left;
    else if (turn < -0.35)
        labels.command = Command::Right;
    else
        labels.command = Command::Straight;
    double min_dist = 1e9;
    for (const auto& ag : agents)
        for (int t = kNow; t < kLen; ++t) min_dist = std::min(min_dist, std::hypot(ag[t].x - ego[t].x, ag[t].y - ego[t].y));
    labels.overlap = min_dist < 2.5;

    double mean_v = 0, max_lat = 0, max_jerk = 0;
    for (int t = kNow; t < kLen; ++t) {
        mean_v += ego[t].v / (kLen - kNow);
        max_lat = std::max(max_lat, std::abs(ego[t].k) * ego[t].v * ego[t].v);
        if (t > kNow) max_jerk = std::max(max_jerk, std::abs(ego[t].v - ego[t - 1].v) / kDt);
    }
    auto clip01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
    metrics.nc = min_dist > 1.0 ? 1.0 : 0.0;
    metrics.dac = 1.0;
    metrics.ddc = 1.0;
    metrics.tlc = crossing && labels.command != Command::Stop && a == Archetype::StopAtCrossing ? 0.0 : 1.0;
    metrics.ep = clip01(mean_v / 14.0);
    metrics.ttc = clip01(min_dist / 20.0);
    metrics.lk = clip01(1.0 - 5.0 * std::abs(ego[kLen - 1].k));
    metrics.hc = clip01(1.0 - max_lat / 4.0);
    metrics.ec = clip01(1.0 - max_jerk / 4.0);
    metrics.comf = clip01(1.0 - 0.5 * (max_lat + max_jerk) / 4.0);
    return g;
}

void WorldSpec::complete() {
    const auto k = static_cast<std::size_t>(archetypes);
    if (archetypes != kArchetypeCount) {
        // Other sizes cycle through the built-in archetypes with a default response.
        if (real_share.empty()) {
            for (std::size_t i = 0; i < k; ++i) real_share.push_back(1.0 / (1.0 + static_cast<double>(i)));
        }
        if (a.empty())
            for (std::size_t i = 0; i < k; ++i) a.push_back(0.85 - 0.5 * static_cast<double>(i) / std::max<double>(1, k - 1));
        if (b.empty())
            for (std::size_t i = 0; i < k; ++i) b.push_back(0.02 + 0.10 * static_cast<double>(i) / std::max<double>(1, k - 1));
    } else {
        if (real_share.empty()) real_share = {0.30, 0.22, 0.16, 0.12, 0.08, 0.06, 0.04, 0.02};
        if (a.empty()) a = {0.82, 0.80, 0.74, 0.66, 0.62, 0.50, 0.42, 0.34};
        if (b.empty()) b = {0.02, 0.02, 0.04, 0.06, 0.06, 0.10, 0.12, 0.12};
    }
    if (m0.empty()) m0.assign(k, 50.0);
    if (transfer.size() == 0) {
        transfer = MatrixXd::Identity(archetypes, archetypes);
        if (archetypes == kArchetypeCount) {
            auto link = [&](Archetype x, Archetype y, double w) {
                transfer(static_cast<int>(x), static_cast<int>(y)) = w;
                transfer(static_cast<int>(y), static_cast<int>(x)) = w;
            };
            link(Archetype::Cruise, Archetype::LaneChange, 0.2);
            link(Archetype::Cruise, Archetype::DenseFollow, 0.2);
            link(Archetype::LeftTurn, Archetype::RightTurn, 0.3);
            link(Archetype::LeftTurn, Archetype::UTurn, 0.3);
            link(Archetype::LeftTurn, Archetype::Roundabout, 0.2);
            link(Archetype::DenseFollow, Archetype::StopAtCrossing, 0.3);
        }
    }
}

void WorldSpec::validate() const {
    const auto k = static_cast<std::size_t>(archetypes);
    if (archetypes < 1) throw std::invalid_argument("world: archetypes must be >= 1");
    if (n_real < 1 || n_pool < 1 || n_cal < 1) throw std::invalid_argument("world: counts must be >= 1");
    for (const auto* vec : {&real_share, &a, &b, &m0})
        if (vec->size() != k) throw std::invalid_argument("world: per-archetype arrays must have `archetypes` entries");
    for (std::size_t i = 0; i < k; ++i) {
        if (!(a[i] >= 0 && a[i] <= 1)) throw std::invalid_argument("world: a must lie in [0,1]");
        if (!(real_share[i] >= 0)) throw std::invalid_argument("world: real_share must be nonnegative");
        if (!(m0[i] > 0)) throw std::invalid_argument("world: m0 must be positive");
    }
    if (transfer.rows() != archetypes || transfer.cols() != archetypes)
        throw std::invalid_argument("world: transfer must be archetypes x archetypes");
    for (int i = 0; i < archetypes; ++i)
        for (int j = 0; j < archetypes; ++j) {
            if (transfer(i, j) < 0) throw std::invalid_argument("world: transfer entries must be >= 0");
            if (i != j && transfer(i, j) > transfer(i, i)) throw std::invalid_argument("world: transfer must be diagonal dominant");
        }
    if (!(noise_sigma >= 0)) throw std::invalid_argument("world: noise_sigma must be >= 0");
    if (draws < 1) throw std::invalid_argument("world: draws must be >= 1");
}

WorldSpec default_world_spec(std::uint64_t seed) {
    WorldSpec s;
    s.seed = seed;
    s.complete();
    return s;
}

namespace {

std::vector<std::int64_t> largest_remainder(const std::vector<double>& share, int total) {
    const double sum = std::accumulate(share.begin(), share.end(), 0.0);
    if (!(sum > 0)) throw std::invalid_argument("world: real_share sums to zero");
    std::vector<std::int64_t> out(share.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::int64_t used = 0;
    for (std::size_t i = 0; i < share.size(); ++i) {
        const double exact = share[i] / sum * total;
        out[i] = static_cast<std::int64_t>(std::floor(exact));
        used += out[i];
        rem.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::sort(rem.begin(), rem.end());
    for (std::size_t i = 0; used < total; ++i, ++used) ++out[rem[i % rem.size()].second];
    return out;
}

struct Generator {
    std::mt19937_64 rng;
    std::set<std::string> used_ids;
    std::unordered_map<std::string, int>* archetype_of;

    std::string fresh_id(char prefix) {
        for (;;) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%c%012llx", prefix, static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
            if (used_ids.insert(buf).second) return buf;
        }
    }

    void fill(Dataset& d, const std::vector<std::int64_t>& counts, Provenance prov, char prefix) {
        std::vector<int> order;
        for (std::size_t c = 0; c < counts.size(); ++c) order.insert(order.end(), static_cast<std::size_t>(counts[c]), static_cast<int>(c));
        std::shuffle(order.begin(), order.end(), rng);
        for (int arch : order) {
            SemanticLabels lab;
            SubscoreVector met;
            const std::string id = fresh_id(prefix);
            d.graphs[id] = make_scene(static_cast<Archetype>(arch % kArchetypeCount), rng, lab, met);
            d.labels[id] = lab;
            d.metrics[id] = met;
            d.tokens.push_back({id, prov});
            (*archetype_of)[id] = arch;
        }
    }
};

}  // namespace

World generate_world(const WorldSpec& spec_in) {
    WorldSpec spec = spec_in;
    spec.complete();
    spec.validate();
    World w;
    w.spec = spec;
    Generator gen{std::mt19937_64(seed_mix(spec.seed, 1)), {}, &w.archetype_of};

    gen.fill(w.real, largest_remainder(spec.real_share, spec.n_real), Provenance::Real, 'r');
    const std::vector<double> flat(static_cast<std::size_t>(spec.archetypes), 1.0);
    gen.fill(w.pool, largest_remainder(flat, spec.n_pool), Provenance::Synthetic, 's');

    // Calibration: stratified half of a balanced held-out set.
    Dataset held;
    gen.fill(held, largest_remainder(flat, 2 * spec.n_cal), Provenance::Calibration, 'c');
    std::map<std::string, int> strata;
    for (const auto& t : held.tokens) strata[t.id] = w.archetype_of.at(t.id);
    CalibrationSplit split = split_calibration(held, 0.5, strata, seed_mix(spec.seed, 2));
    w.cal = std::move(split.calibration);
    for (const auto& t : split.remainder.tokens) w.archetype_of.erase(t.id);
    return w;
}

GroundTruthOracle::GroundTruthOracle(std::shared_ptr<const World> world)
    : GroundTruthOracle(world, world->spec) {}

GroundTruthOracle::GroundTruthOracle(std::shared_ptr<const World> world, WorldSpec response)
    : world_(std::move(world)), response_(std::move(response)) {
    if (!world_) throw std::invalid_argument("oracle: null world");
    response_.complete();
    response_.validate();
    if (response_.archetypes != world_->spec.archetypes) throw std::invalid_argument("oracle: archetype count mismatch");
}

PolicyHandle GroundTruthOracle::train(const std::vector<std::string>& training) {
    PolicyHandle h;
    h.training = training;
    std::sort(h.training.begin(), h.training.end());
    for (const auto& id : h.training)
        if (!world_->archetype_of.count(id)) throw std::invalid_argument("oracle: token not from this world: " + id);
    h.key = hash_token_set(h.training);
    return h;
}

VectorXd GroundTruthOracle::archetype_scores(const std::vector<std::string>& training) const {
    const int k = response_.archetypes;
    VectorXd m = VectorXd::Zero(k), syn = VectorXd::Zero(k);
    for (const auto& id : training) {
        auto it = world_->archetype_of.find(id);
        if (it == world_->archetype_of.end()) throw std::invalid_argument("oracle: token not from this world: " + id);
        m[it->second] += 1;
        if (world_->pool.contains(id)) syn[it->second] += 1;
    }
    VectorXd gain(k);
    for (int j = 0; j < k; ++j)
        gain[j] = response_.b[static_cast<std::size_t>(j)] * std::log1p(m[j] / response_.m0[static_cast<std::size_t>(j)]);
    const VectorXd transfer = response_.transfer * gain;
    VectorXd s(k);
    for (int i = 0; i < k; ++i) {
        const double r = m[i] > 0 ? syn[i] / m[i] : 0.0;
        s[i] = std::clamp(response_.a[static_cast<std::size_t>(i)] + transfer[i] + response_.g * r, 0.0, 1.0);
    }
    return s;
}

std::map<std::string, double> GroundTruthOracle::evaluate(const PolicyHandle& h, const Dataset& cal) {
    const VectorXd s = archetype_scores(h.training);
    std::vector<std::string> ids;
    for (const auto& t : cal.tokens) ids.push_back(t.id);
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed_mix(response_.seed, h.key));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::map<std::string, double> out;
    for (const auto& id : ids) {
        auto it = world_->archetype_of.find(id);
        if (it == world_->archetype_of.end()) throw std::invalid_argument("oracle: calibration token not from this world: " + id);
        double acc = 0;
        for (int d = 0; d < response_.draws; ++d)
            acc += std::clamp(s[it->second] + response_.noise_sigma * noise(rng), 0.0, 1.0);
        out[id] = acc / response_.draws;
    }
    return out;
}

std::pair<WorldSpec, WorldSpec> oracle_pair_specs(const WorldSpec& base_in) {
    WorldSpec base = base_in;
    base.complete();
    if (base.archetypes < 2) throw std::invalid_argument("oracle_pair: need at least 2 archetypes");
    const int k = base.archetypes;
    // Second response rotates the per-archetype (a, b) profile by half the
    // archetype count, so the lowest-a archetypes of the two never coincide
    // for the default profile.
    WorldSpec other = base;
    const int shift = k / 2;
    for (int i = 0; i < k; ++i) {
        other.a[static_cast<std::size_t>(i)] = base.a[static_cast<std::size_t>((i + shift) % k)];
        other.b[static_cast<std::size_t>(i)] = base.b[static_cast<std::size_t>((i + shift) % k)];
    }
    other.seed = seed_mix(base.seed, 3);
    return {base, other};
}

TransferHistory transfer_history(std::uint64_t seed, int k, int rounds, double sigma) {
    std::mt19937_64 rng(seed_mix(seed, 4));
    const int dim = 6;
    MatrixXd c(k, dim);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < dim; ++j) c(i, j) = gauss(rng, 1.0);
        c.row(i).normalize();
    }
    TransferHistory out;
    out.r = rbf_similarity(c, sigma).r;
    // Hidden transfer: a sharper kernel on the same geometry, scaled down
    // off the diagonal.
    MatrixXd t(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double d = 1.0 - c.row(i).dot(c.row(j));
            t(i, j) = i == j ? 1.0 : 0.8 * std::exp(-d * d / (2 * 0.4 * 0.4));
        }
    VectorXd a(k), b(k);
    out.n0.resize(k);
    for (int i = 0; i < k; ++i) {
        a[i] = uni(rng, 0.3, 0.7);
        b[i] = uni(rng, 0.03, 0.1);
        out.n0[i] = std::floor(uni(rng, 40, 200));
    }
    const double budget = 500;
    out.n_total = out.n0.sum() + budget;
    std::gamma_distribution<double> gam(1.0, 1.0);
    for (int t_round = 0; t_round < rounds; ++t_round) {
        VectorXd share(k);
        for (int i = 0; i < k; ++i) share[i] = gam(rng);
        share /= share.sum();
        VectorXd m = out.n0 + budget * share;
        VectorXd gain(k), ratio(k);
        for (int j = 0; j < k; ++j) {
            gain[j] = b[j] * std::log1p(m[j] / 50.0);
            ratio[j] = (m[j] - out.n0[j]) / m[j];
        }
        RoundObservation o;
        o.w = m / out.n_total;
        o.s_bar = a + t * gain - 0.03 * ratio;
        for (int i = 0; i < k; ++i) o.s_bar[i] = std::clamp(o.s_bar[i] + gauss(rng, 0.003), 0.0, 1.0);
        out.history.push_back(std::move(o));
    }
    return out;
}

}  // namespace autoscale::sim
