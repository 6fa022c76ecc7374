#include "autoscale/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "autoscale/baselines.hpp"
#include "autoscale/log.hpp"
#include "autoscale/metrics.hpp"

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string_view to_string(Method m) {
    switch (m) {
        case Method::AutoScale: return "autoscale";
        case Method::Uniform: return "uniform";
        case Method::Iwr: return "iwr";
        case Method::Chameleon: return "chameleon";
    }
    return "?";
}

Method method_from_string(std::string_view s) {
    for (Method m : {Method::AutoScale, Method::Uniform, Method::Iwr, Method::Chameleon})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected autoscale, uniform, iwr or chameleon)");
}

void EngineConfig::validate() const {
    if (budget < 0) throw std::invalid_argument("budget must be >= 0");
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (clusters < 1) throw std::invalid_argument("clusters must be >= 1");
    if (!(sigma > 0)) throw std::invalid_argument("sigma must be > 0");
    if (!(lambda_reg > 0)) throw std::invalid_argument("lambda_reg must be > 0");
    if (!(eps_max > 0)) throw std::invalid_argument("eps_max must be > 0");
    if (pca_dim < 1) throw std::invalid_argument("pca_dim must be >= 1");
    if (!(lambda_c > 0)) throw std::invalid_argument("lambda_c must be > 0");
    if (feasible_samples < 1) throw std::invalid_argument("feasible_samples must be >= 1");
    if (embedding.dim < 1 || embedding.layers < 0 || embedding.heads < 1 || embedding.dim % embedding.heads != 0)
        throw std::invalid_argument("embedding.dim must be a positive multiple of embedding.heads");
    if (embedding.steps < 0 || embedding.batch_size < 2) throw std::invalid_argument("embedding.steps >= 0 and batch_size >= 2 required");
}

json EngineConfig::to_json() const {
    return {{"budget", budget},
            {"rounds", rounds},
            {"clusters", clusters},
            {"sigma", sigma},
            {"lambda_reg", lambda_reg},
            {"eps_max", eps_max},
            {"seed", seed},
            {"method", std::string(autoscale::to_string(method))},
            {"pca_dim", pca_dim},
            {"lambda_c", lambda_c},
            {"feasible_samples", feasible_samples},
            {"anchors", {{"max_per_cluster", anchors.max_per_cluster}, {"threshold", anchors.threshold}}},
            {"embedding",
             {{"dim", embedding.dim},
              {"layers", embedding.layers},
              {"heads", embedding.heads},
              {"steps", embedding.steps},
              {"batch_size", embedding.batch_size},
              {"learning_rate", embedding.learning_rate},
              {"lambda", embedding.lambda}}}};
}

Workspace prepare_from_embeddings(const Dataset& real, const Dataset& pool, const Dataset& cal, EmbeddingTable emb_real,
                                  EmbeddingTable emb_pool, EmbeddingTable emb_cal, const EngineConfig& cfg) {
    cfg.validate();
    auto report = validate_pools(real, pool, cal);
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw std::invalid_argument("invalid pools (" + std::to_string(report.violations.size()) + " violations), first: " +
                                    v.token + ": " + v.message);
    }
    if (real.size() == 0 || cal.size() == 0) throw std::invalid_argument("real and calibration sets must be nonempty");
    Workspace ws;
    ws.real = &real;
    ws.pool = &pool;
    ws.cal = &cal;
    ws.emb_real = std::move(emb_real);
    ws.emb_pool = std::move(emb_pool);
    ws.emb_cal = std::move(emb_cal);
    for (const auto& [d, e] : {std::pair{&real, &ws.emb_real}, std::pair{&pool, &ws.emb_pool}, std::pair{&cal, &ws.emb_cal}})
        for (const auto& t : d->tokens)
            if (!e->count(t.id)) throw std::invalid_argument("no embedding for token " + t.id);

    ws.model = fit_clusters(ws.emb_real, cfg.clusters, seed_mix(cfg.seed, 11), cfg.pca_dim);
    const int k = ws.model.k;
    ws.cl_real = assign_table(ws.model, ws.emb_real);
    ws.cl_pool = assign_table(ws.model, ws.emb_pool);
    ws.cl_cal = assign_table(ws.model, ws.emb_cal);
    ws.n0 = VectorXd::Zero(k);
    for (const auto& [id, c] : ws.cl_real) ws.n0[c] += 1;
    ws.pool_counts = VectorXd::Zero(k);
    for (const auto& [id, c] : ws.cl_pool) ws.pool_counts[c] += 1;
    std::vector<int> cal_ids;
    for (const auto& [id, c] : ws.cl_cal) cal_ids.push_back(c);
    ws.pi = calibration_mixture(cal_ids, k);
    ws.model.pi = ws.pi;
    ws.r = rbf_similarity(ws.model.centroids, cfg.sigma);
    return ws;
}

rae::GraphRaeParams train_encoder(const Dataset& real, const EngineConfig& cfg) {
    cfg.validate();
    rae::GraphRaeConfig rc;
    rc.d = cfg.embedding.dim;
    rc.layers = cfg.embedding.layers;
    rc.heads = cfg.embedding.heads;
    rc.steps = cfg.embedding.steps;
    rc.batch_size = cfg.embedding.batch_size;
    rc.learning_rate = cfg.embedding.learning_rate;
    rc.lambda = cfg.embedding.lambda;
    rc.seed = seed_mix(cfg.seed, 10);
    if (!real.tokens.empty()) rc.t_len = real.graphs.at(real.tokens.front().id).t_len;
    return rae::train(real, rc).params;
}

Workspace prepare(const Dataset& real, const Dataset& pool, const Dataset& cal, const EngineConfig& cfg) {
    const auto params = train_encoder(real, cfg);
    return prepare_from_embeddings(real, pool, cal, rae::embed_dataset(real, params), rae::embed_dataset(pool, params),
                                   rae::embed_dataset(cal, params), cfg);
}

RoundObservation RoundRecord::observation() const { return {mixture, cluster_scores, missing}; }

namespace {

json vec_json(const VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v[i]))
            a.push_back(v[i]);
        else
            a.push_back(nullptr);
    }
    return a;
}

VectorXd vec_from(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
    VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
    return v;
}

}  // namespace

json to_json(const RoundRecord& r) {
    json j;
    j["schema_version"] = kRoundLogSchema;
    j["round"] = r.round;
    j["method"] = r.method;
    j["mixture"] = vec_json(r.mixture);
    j["cluster_scores"] = vec_json(r.cluster_scores);
    j["missing"] = r.missing;
    j["overall"] = r.overall;
    j["selected"] = r.selected;
    j["realized_counts"] = r.realized_counts;
    j["predictor"] = r.predictor ? json{{"beta", vec_json(r.predictor->beta)},
                                        {"gamma", r.predictor->gamma},
                                        {"lambda_reg", r.predictor->lambda_reg}}
                                 : json(nullptr);
    j["gains"] = r.gains ? vec_json(*r.gains) : json(nullptr);
    j["target_mixture"] = r.target_mixture ? vec_json(*r.target_mixture) : json(nullptr);
    j["delta"] = r.delta ? json(*r.delta) : json(nullptr);
    j["eps"] = r.eps ? json(*r.eps) : json(nullptr);
    j["warm_start"] = r.warm_start ? json(*r.warm_start) : json(nullptr);
    j["feasible"] = r.feasible ? json(*r.feasible) : json(nullptr);
    j["uniform_fallback"] = r.uniform_fallback;
    j["shortfall"] = r.shortfall;
    return j;
}

RoundRecord round_record_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("round record must be a JSON object");
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kRoundLogSchema)
        throw std::invalid_argument("unsupported or missing schema_version");
    RoundRecord r;
    r.round = j.at("round").get<int>();
    r.method = j.at("method").get<std::string>();
    r.mixture = vec_from(j.at("mixture"));
    r.cluster_scores = vec_from(j.at("cluster_scores"));
    r.missing = j.at("missing").get<std::vector<bool>>();
    r.overall = j.at("overall").get<double>();
    r.selected = j.at("selected").get<std::vector<std::string>>();
    r.realized_counts = j.at("realized_counts").get<std::vector<std::int64_t>>();
    if (!j.at("predictor").is_null()) {
        const json& p = j.at("predictor");
        r.predictor = PredictorParams{vec_from(p.at("beta")), p.at("gamma").get<double>(), p.at("lambda_reg").get<double>()};
    }
    if (!j.at("gains").is_null()) r.gains = vec_from(j.at("gains"));
    if (!j.at("target_mixture").is_null()) r.target_mixture = vec_from(j.at("target_mixture"));
    if (!j.at("delta").is_null()) r.delta = j.at("delta").get<std::vector<std::int64_t>>();
    if (!j.at("eps").is_null()) r.eps = j.at("eps").get<double>();
    if (!j.at("warm_start").is_null()) r.warm_start = j.at("warm_start").get<int>();
    if (!j.at("feasible").is_null()) r.feasible = j.at("feasible").get<std::string>();
    r.uniform_fallback = j.at("uniform_fallback").get<bool>();
    r.shortfall = j.at("shortfall").get<bool>();
    const auto k = r.mixture.size();
    if (r.cluster_scores.size() != k || static_cast<Eigen::Index>(r.missing.size()) != k)
        throw std::invalid_argument("mixture, cluster_scores and missing must have equal length");
    return r;
}

std::string round_log_line(const RoundRecord& r) { return to_json(r).dump(); }

std::vector<RoundRecord> read_round_log(const std::filesystem::path& path) {
    auto is = open_in(path);
    std::vector<RoundRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(round_record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(path.string(), n, e.what());
        }
        if (out.back().round != static_cast<int>(out.size()) - 1)
            throw ParseError(path.string(), n, "expected round " + std::to_string(out.size() - 1) + ", found " +
                                                   std::to_string(out.back().round));
    }
    return out;
}

Evaluation evaluate_training_set(const Workspace& ws, PolicyOracle& oracle, const std::vector<std::string>& added) {
    std::vector<std::string> training;
    training.reserve(ws.real->size() + added.size());
    for (const auto& t : ws.real->tokens) training.push_back(t.id);
    training.insert(training.end(), added.begin(), added.end());
    Evaluation ev;
    ev.scene_scores = oracle.evaluate(oracle.train(training), *ws.cal);
    for (const auto& t : ws.cal->tokens) {
        auto it = ev.scene_scores.find(t.id);
        if (it == ev.scene_scores.end()) throw std::runtime_error("oracle returned no score for calibration token " + t.id);
        if (!(it->second >= 0.0 && it->second <= 1.0)) throw std::runtime_error("oracle score outside [0,1] for " + t.id);
    }
    ev.clusters = aggregate_scores(ev.scene_scores, ws.cl_cal, ws.k());
    ev.overall = overall_score(ws.pi, ev.clusters);
    return ev;
}

namespace {

const char* feasible_name(FeasibleMethod m) {
    switch (m) {
        case FeasibleMethod::Identity: return "identity";
        case FeasibleMethod::Perturbed: return "perturbed";
        case FeasibleMethod::Projection: return "projection";
    }
    return "?";
}

std::int64_t effective_budget(const Workspace& ws, const EngineConfig& cfg) {
    return std::min<std::int64_t>(cfg.budget, static_cast<std::int64_t>(ws.pool->size()));
}

VectorXd floor_and_normalize(const VectorXd& w) {
    VectorXd f = w.cwiseMax(kMixtureFloor);
    return f / f.sum();
}

}  // namespace

Selection baseline_selection(const Workspace& ws, const EngineConfig& cfg, int t) {
    const std::uint64_t s = seed_mix(cfg.seed, 100 + static_cast<std::uint64_t>(t));
    const std::int64_t budget = effective_budget(ws, cfg);
    switch (cfg.method) {
        case Method::Uniform: return uniform_select(ws.emb_pool, budget, s);
        case Method::Iwr: return iwr_select(ws.emb_real, ws.emb_pool, budget);
        case Method::Chameleon: {
            std::map<std::string, int> nearest;
            for (const auto& [id, v] : ws.emb_pool) nearest[id] = nearest_centroid(ws.model.centroids, to_model_space(ws.model, v));
            return chameleon_select(ws.model.centroids, nearest, budget, cfg.lambda_c, s).selection;
        }
        case Method::AutoScale: break;
    }
    throw std::invalid_argument("baseline_selection: autoscale is not a baseline");
}

MixtureStep mixture_step(const Workspace& ws, const std::vector<RoundRecord>& records, const EngineConfig& cfg, int t) {
    if (records.size() < 2)
        throw InsufficientHistory("insufficient history: the mixture update needs at least 2 logged rounds, found " +
                                  std::to_string(records.size()));
    const int k = ws.k();
    const std::int64_t budget = effective_budget(ws, cfg);
    const double n_total = ws.n0_total() + static_cast<double>(budget);
    std::vector<RoundObservation> history;
    for (const auto& r : records) {
        if (r.mixture.size() != k) throw std::invalid_argument("logged cluster count does not match the workspace");
        history.push_back(r.observation());
    }
    MixtureStep m;
    m.warm_start = best_round(history, ws.pi);
    const auto pairs = build_pairs(history, ws.r.r, ws.n0, n_total);
    if (pairs.empty()) throw std::runtime_error("round " + std::to_string(t) + ": no predictor rows (all clusters missing)");
    m.predictor = fit_predictor(pairs, k, cfg.lambda_reg);
    m.w_prev = floor_and_normalize(history[static_cast<std::size_t>(m.warm_start)].w);
    m.gradient = gradient(m.predictor, ws.r.r, ws.pi, m.w_prev, ws.n0, n_total);
    m.eps = half_cosine_schedule(t, std::max(cfg.rounds, t), cfg.eps_max);
    const EgResult eg = eg_update(m.w_prev, m.gradient, m.eps);
    m.step_reached = eg.reached;
    if (!eg.reached) log().warn("round {}: step target {} not reachable, eta capped", t, m.eps);
    const MixtureBounds bounds = mixture_bounds(ws.n0, ws.pool_counts, n_total);
    SurrogateContext ctx{&m.predictor, &ws.r.r, &ws.pi, &ws.n0, n_total};
    const FeasibleResult fr = feasible_search(eg.w, m.w_prev, bounds, ctx, seed_mix(cfg.seed, 100 + static_cast<std::uint64_t>(t)),
                                              cfg.feasible_samples);
    m.target = fr.w;
    m.feasible = feasible_name(fr.method);
    std::vector<std::int64_t> n0i(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) n0i[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(ws.n0[c]);
    m.delta = augmentation_sizes(fr.w, n0i, static_cast<std::int64_t>(n_total), budget);
    m.gains = gains(m.predictor, ws.r.r, m.w_prev, fr.w, ws.n0, n_total);
    return m;
}

namespace {

struct LoopState {
    std::vector<RoundRecord> records;
    std::map<int, std::map<std::string, double>> scene_scores;  // per round, filled lazily on resume
};

class Loop {
public:
    Loop(const Workspace& ws, PolicyOracle& oracle, const EngineConfig& cfg, const RunOutputs& out)
        : ws_(ws), oracle_(oracle), cfg_(cfg), out_(out) {
        cfg_.validate();
        if (ws_.k() != static_cast<int>(ws_.n0.size())) throw std::invalid_argument("workspace is inconsistent");
        budget_ = effective_budget(ws_, cfg_);
    }

    int last_round() const { return cfg_.method == Method::AutoScale ? cfg_.rounds : 1; }

    void go(LoopState& st) {
        while (static_cast<int>(st.records.size()) <= last_round()) {
            const int t = static_cast<int>(st.records.size());
            const auto start = std::chrono::steady_clock::now();
            RoundRecord rec = t == 0 ? round_zero(st) : round_t(st, t);
            rec.timing = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            append(rec);
            st.records.push_back(std::move(rec));
            log().info("round {}: overall {:.6f}", t, st.records.back().overall);
            if (out_.stop_after >= 0 && t >= out_.stop_after) break;
        }
    }

    void restore(LoopState& st) {
        if (st.records.empty()) return;
        for (const auto& r : st.records) {
            if (r.method != to_string(cfg_.method)) throw std::invalid_argument("log method '" + r.method + "' does not match config");
            if (r.mixture.size() != ws_.k()) throw std::invalid_argument("log cluster count does not match workspace");
        }
    }

private:
    void append(const RoundRecord& rec) {
        if (out_.log) {
            std::ofstream os(*out_.log, std::ios::app | std::ios::binary);
            if (!os) throw std::runtime_error("cannot append to " + out_.log->string());
            os << round_log_line(rec) << '\n';
        }
        if (out_.timing) {
            const bool fresh = !std::filesystem::exists(*out_.timing);
            std::ofstream os(*out_.timing, std::ios::app | std::ios::binary);
            CsvWriter w(os);
            if (fresh) w.row({"round", "seconds"});
            w.field(rec.round).field(rec.timing);
            w.end_row();
        }
    }

    void score(RoundRecord& rec, LoopState& st) {
        Evaluation ev = evaluate_training_set(ws_, oracle_, rec.selected);
        rec.cluster_scores = ev.clusters.s_bar;
        rec.missing = ev.clusters.missing;
        rec.overall = ev.overall;
        st.scene_scores[rec.round] = std::move(ev.scene_scores);
    }

    RoundRecord round_zero(LoopState& st) {
        RoundRecord rec;
        rec.round = 0;
        rec.method = std::string(to_string(cfg_.method));
        rec.mixture = ws_.n0 / ws_.n0_total();
        rec.realized_counts.assign(static_cast<std::size_t>(ws_.k()), 0);
        score(rec, st);
        return rec;
    }

    void realize(RoundRecord& rec, const Selection& sel) {
        rec.selected = sel.tokens();
        rec.shortfall = sel.shortfall;
        rec.uniform_fallback = sel.uniform_fallback;
        rec.realized_counts.assign(static_cast<std::size_t>(ws_.k()), 0);
        for (const auto& id : rec.selected) ++rec.realized_counts[static_cast<std::size_t>(ws_.cl_pool.at(id))];
        VectorXd counts = ws_.n0;
        for (int c = 0; c < ws_.k(); ++c) counts[c] += static_cast<double>(rec.realized_counts[static_cast<std::size_t>(c)]);
        rec.mixture = counts / counts.sum();
    }

    RoundRecord round_t(LoopState& st, int t) {
        RoundRecord rec;
        rec.round = t;
        rec.method = std::string(to_string(cfg_.method));
        const std::uint64_t round_seed = seed_mix(cfg_.seed, 100 + static_cast<std::uint64_t>(t));
        if (cfg_.method != Method::AutoScale) {
            realize(rec, baseline_selection(ws_, cfg_, t));
            score(rec, st);
            return rec;
        }
        const int k = ws_.k();
        std::vector<RoundObservation> history;
        for (const auto& r : st.records) history.push_back(r.observation());
        const int best = best_round(history, ws_.pi);
        const auto anchors = select_anchors(scores_of(st, best), ws_.cl_cal, ws_.emb_cal, cfg_.anchors);
        VectorXd alpha = VectorXd::Zero(k);
        if (t >= 2) {
            MixtureStep m = mixture_step(ws_, st.records, cfg_, t);
            alpha = m.gains;
            rec.predictor = m.predictor;
            rec.gains = m.gains;
            rec.target_mixture = m.target;
            rec.delta = m.delta;
            rec.eps = m.eps;
            rec.warm_start = m.warm_start;
            rec.feasible = m.feasible;
        }
        realize(rec, retrieve(anchors, ws_.emb_pool, alpha, budget_, round_seed));
        score(rec, st);
        return rec;
    }

    // Per-scene scores of a past round, re-evaluated through the oracle when
    // the round came from a log.
    const std::map<std::string, double>& scores_of(LoopState& st, int round) {
        auto it = st.scene_scores.find(round);
        if (it != st.scene_scores.end()) return it->second;
        const auto& sel = st.records.at(static_cast<std::size_t>(round)).selected;
        return st.scene_scores[round] = evaluate_training_set(ws_, oracle_, sel).scene_scores;
    }

    const Workspace& ws_;
    PolicyOracle& oracle_;
    EngineConfig cfg_;
    RunOutputs out_;
    std::int64_t budget_ = 0;
};

}  // namespace

std::vector<RoundRecord> run(const Workspace& ws, PolicyOracle& oracle, const EngineConfig& cfg, const RunOutputs& out) {
    if (out.log) {
        if (out.log->has_parent_path()) std::filesystem::create_directories(out.log->parent_path());
        std::ofstream truncate(*out.log, std::ios::trunc | std::ios::binary);
        if (!truncate) throw std::runtime_error("cannot write " + out.log->string());
    }
    if (out.timing) std::filesystem::remove(*out.timing);
    Loop loop(ws, oracle, cfg, out);
    LoopState st;
    loop.go(st);
    return st.records;
}

std::vector<RoundRecord> resume(const Workspace& ws, PolicyOracle& oracle, const EngineConfig& cfg,
                                const std::filesystem::path& log_path, const RunOutputs& out_in) {
    RunOutputs out = out_in;
    out.log = log_path;
    Loop loop(ws, oracle, cfg, out);
    LoopState st;
    st.records = read_round_log(log_path);
    if (static_cast<int>(st.records.size()) > loop.last_round() + 1)
        throw std::invalid_argument("log has more rounds than the configuration allows");
    loop.restore(st);
    loop.go(st);
    return st.records;
}

SwapResult swap_experiment(const Workspace& ws, PolicyOracle& a, PolicyOracle& b, const EngineConfig& cfg) {
    SwapResult res;
    res.run_a = run(ws, a, cfg);
    res.run_b = run(ws, b, cfg);
    const auto& sel_a = res.run_a.back().selected;
    const auto& sel_b = res.run_b.back().selected;
    res.jaccard = jaccard(sel_a, sel_b).value;
    PolicyOracle* oracles[2] = {&a, &b};
    const std::vector<std::string>* sels[2] = {&sel_a, &sel_b};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) res.table(i, j) = evaluate_training_set(ws, *oracles[i], *sels[j]).overall;
    if (res.table(0, 0) < res.table(0, 1) || res.table(1, 1) < res.table(1, 0))
        log().info("swap experiment: a self score is below its cross score");
    return res;
}

}  // namespace autoscale
