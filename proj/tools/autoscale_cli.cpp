// autoscale: batch entry point over the data engine.
//
// Precedence for run settings: built-in defaults, then the --config file,
// then command-line flags. Exit codes: 0 ok, 1 validation error, 2 runtime
// error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "autoscale/analytics.hpp"
#include "autoscale/config.hpp"
#include "autoscale/engine.hpp"
#include "autoscale/graph_rae.hpp"
#include "autoscale/harness.hpp"
#include "autoscale/io.hpp"
#include "autoscale/log.hpp"
#include "autoscale/metrics.hpp"

using namespace autoscale;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> budget;
    std::optional<int> rounds;
    std::optional<int> clusters;
    std::optional<std::string> method;
    std::optional<std::string> out;
    std::string embeddings;
};

RunConfig load_config(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : read_run_config(f.config);
    EngineConfig& e = c.engine;
    if (f.seed) e.seed = *f.seed;
    if (f.budget) e.budget = *f.budget;
    if (f.rounds) e.rounds = *f.rounds;
    if (f.clusters) e.clusters = *f.clusters;
    if (f.method) {
        try {
            e.method = method_from_string(*f.method);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError(std::string("--method: ") + ex.what());
        }
    }
    if (f.out) c.paths.out = *f.out;
    if (c.paths.out.empty()) c.paths.out = "autoscale_out";
    try {
        e.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    for (const fs::path* p : {&c.paths.real, &c.paths.syn, &c.paths.cal, &c.paths.world})
        if (!p->empty() && !fs::exists(*p)) throw ConfigError("file not found: " + p->string());
    return c;
}

struct Inputs {
    std::shared_ptr<sim::World> world;
    Dataset real, syn, cal;
};

Inputs load_inputs(const RunConfig& c, bool need_world) {
    Inputs in;
    if (!c.paths.world.empty()) in.world = std::make_shared<sim::World>(sim::generate_world(sim::read_world_spec(c.paths.world)));
    if (need_world && !in.world) throw ConfigError("paths.world is required: the oracle is the harness world");
    auto pick = [&](const fs::path& p, const char* key, const Dataset* from_world) {
        if (!p.empty()) return read_dataset_jsonl(p);
        if (from_world) return *from_world;
        throw ConfigError(std::string("paths.") + key + " is required when paths.world is not set");
    };
    in.real = pick(c.paths.real, "real", in.world ? &in.world->real : nullptr);
    in.syn = pick(c.paths.syn, "syn", in.world ? &in.world->pool : nullptr);
    in.cal = pick(c.paths.cal, "cal", in.world ? &in.world->cal : nullptr);
    return in;
}

Workspace workspace(const Inputs& in, const RunConfig& c, const std::string& emb_dir) {
    if (emb_dir.empty()) return prepare(in.real, in.syn, in.cal, c.engine);
    const fs::path d(emb_dir);
    return prepare_from_embeddings(in.real, in.syn, in.cal, read_embeddings_csv(d / "real.csv"), read_embeddings_csv(d / "syn.csv"),
                                   read_embeddings_csv(d / "cal.csv"), c.engine);
}

std::vector<std::string> vec_strings(const Eigen::VectorXd& v) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(format_double(v[i]));
    return out;
}

void write_json(const json& j, const fs::path& p) {
    auto os = open_out(p);
    os << j.dump(2) << "\n";
}

void write_selection_csv(const Selection& s, const std::map<std::string, int>& clusters, const fs::path& p) {
    auto os = open_out(p);
    CsvWriter w(os);
    w.row({"rank", "token", "cluster", "priority"});
    for (std::size_t i = 0; i < s.ranked.size(); ++i) {
        const auto& r = s.ranked[i];
        w.field(i + 1).field(r.token).field(clusters.at(r.token)).field(r.priority);
        w.end_row();
    }
}

int cmd_gen_world(const Flags& f, const std::string& spec_path) {
    RunConfig c = load_config(f);
    const fs::path src = spec_path.empty() ? c.paths.world : fs::path(spec_path);
    sim::WorldSpec spec = src.empty() ? sim::default_world_spec(c.engine.seed) : sim::read_world_spec(src);
    if (f.seed) spec.seed = *f.seed;
    sim::World w = sim::generate_world(spec);
    const fs::path out = c.paths.out;
    write_dataset_jsonl(w.real, out / "real.jsonl");
    write_dataset_jsonl(w.pool, out / "syn.jsonl");
    write_dataset_jsonl(w.cal, out / "cal.jsonl");
    open_out(out / "world.toml") << to_toml(w.spec);
    std::printf("wrote %zu real, %zu synthetic, %zu calibration scenes to %s\n", w.real.size(), w.pool.size(), w.cal.size(),
                out.string().c_str());
    return 0;
}

int cmd_embed(const Flags& f) {
    RunConfig c = load_config(f);
    Inputs in = load_inputs(c, false);
    const auto params = train_encoder(in.real, c.engine);
    const fs::path out = c.paths.out / "embeddings";
    rae::save_params(params, out / "encoder.bin");
    write_embeddings_csv(rae::embed_dataset(in.real, params), out / "real.csv");
    write_embeddings_csv(rae::embed_dataset(in.syn, params), out / "syn.csv");
    write_embeddings_csv(rae::embed_dataset(in.cal, params), out / "cal.csv");
    std::printf("embeddings written to %s\n", out.string().c_str());
    return 0;
}

int cmd_cluster(const Flags& f) {
    RunConfig c = load_config(f);
    Inputs in = load_inputs(c, false);
    Workspace ws = workspace(in, c, f.embeddings);
    const fs::path out = c.paths.out / "clusters";
    write_cluster_model(ws.model, out / "model.json");
    write_assignments_csv(ws.cl_real, out / "real.csv");
    write_assignments_csv(ws.cl_pool, out / "syn.csv");
    write_assignments_csv(ws.cl_cal, out / "cal.csv");
    {
        auto os = open_out(out / "summary.csv");
        CsvWriter w(os);
        w.row({"cluster", "n_real", "n_pool", "pi"});
        for (int k = 0; k < ws.k(); ++k) {
            w.field(k).field(ws.n0[k]).field(ws.pool_counts[k]).field(ws.pi[k]);
            w.end_row();
        }
    }
    {
        auto os = open_out(out / "similarity.csv");
        CsvWriter w(os);
        for (int i = 0; i < ws.k(); ++i) w.row(vec_strings(ws.r.r.row(i).transpose()));
    }
    std::printf("%d clusters written to %s\n", ws.k(), out.string().c_str());
    return 0;
}

fs::path default_log(const RunConfig& c, const std::string& log) {
    fs::path p = log.empty() ? c.paths.out / "rounds.jsonl" : fs::path(log);
    if (!fs::exists(p)) throw ConfigError("round log not found: " + p.string());
    return p;
}

int cmd_optimize(const Flags& f, const std::string& log_path) {
    RunConfig c = load_config(f);
    const fs::path lp = default_log(c, log_path);
    const auto records = read_round_log(lp);
    if (records.size() < 2) throw InsufficientHistory("insufficient history: " + lp.string() + " has " + std::to_string(records.size()) +
                                                      " round(s), at least 2 are needed");
    Inputs in = load_inputs(c, false);
    Workspace ws = workspace(in, c, f.embeddings);
    const int t = static_cast<int>(records.size());
    MixtureStep m = mixture_step(ws, records, c.engine, t);
    json j{{"round", t},
           {"warm_start", m.warm_start},
           {"w_prev", json(std::vector<double>(m.w_prev.data(), m.w_prev.data() + m.w_prev.size()))},
           {"beta", json(std::vector<double>(m.predictor.beta.data(), m.predictor.beta.data() + m.predictor.beta.size()))},
           {"gamma", m.predictor.gamma},
           {"eps", m.eps},
           {"step_reached", m.step_reached},
           {"target_mixture", json(std::vector<double>(m.target.data(), m.target.data() + m.target.size()))},
           {"feasible", m.feasible},
           {"delta", m.delta},
           {"gains", json(std::vector<double>(m.gains.data(), m.gains.data() + m.gains.size()))}};
    write_json(j, c.paths.out / "optimize.json");
    std::printf("round %d target mixture written to %s\n", t, (c.paths.out / "optimize.json").string().c_str());
    return 0;
}

int cmd_select(const Flags& f, const std::string& method, const std::string& gains_path) {
    Flags g = f;
    g.method = method;
    RunConfig c = load_config(g);
    const bool ours = c.engine.method == Method::AutoScale;
    Inputs in = load_inputs(c, ours);
    Workspace ws = workspace(in, c, f.embeddings);
    Selection sel;
    if (ours) {
        // Anchors from the real-only policy, alpha from a previous optimize step when given.
        sim::GroundTruthOracle oracle(in.world);
        Evaluation base = evaluate_training_set(ws, oracle, {});
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(ws.k());
        if (!gains_path.empty()) {
            json j = json::parse(open_in(gains_path));
            const auto v = j.at("gains").get<std::vector<double>>();
            if (static_cast<int>(v.size()) != ws.k()) throw std::invalid_argument(gains_path + ": gains length does not match clusters");
            alpha = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        const auto anchors = select_anchors(base.scene_scores, ws.cl_cal, ws.emb_cal, c.engine.anchors);
        sel = retrieve(anchors, ws.emb_pool, alpha, c.engine.budget, seed_mix(c.engine.seed, 101));
    } else {
        sel = baseline_selection(ws, c.engine, 1);
    }
    const fs::path p = c.paths.out / ("selection_" + method + ".csv");
    write_selection_csv(sel, ws.cl_pool, p);
    std::printf("%zu tokens selected%s, written to %s\n", sel.ranked.size(), sel.shortfall ? " (pool shortfall)" : "", p.string().c_str());
    return 0;
}

int cmd_run(const Flags& f, bool resume_log) {
    RunConfig c = load_config(f);
    Inputs in = load_inputs(c, true);
    Workspace ws = workspace(in, c, f.embeddings);
    sim::GroundTruthOracle oracle(in.world);
    const fs::path out = c.paths.out;
    fs::create_directories(out);
    RunOutputs ro{out / "rounds.jsonl", out / "timing.csv", -1};
    const auto recs = resume_log && fs::exists(*ro.log) ? resume(ws, oracle, c.engine, *ro.log, ro) : run(ws, oracle, c.engine, ro);

    std::vector<RoundObservation> history;
    for (const auto& r : recs) history.push_back(r.observation());
    const int best = best_round(history, ws.pi);
    {
        auto os = open_out(out / "summary.csv");
        CsvWriter w(os);
        w.row({"round", "method", "overall", "selected", "best"});
        for (const auto& r : recs) {
            w.field(r.round).field(r.method).field(r.overall).field(r.selected.size()).field(r.round == best ? 1 : 0);
            w.end_row();
        }
    }
    open_out(out / "config.toml") << to_toml(c);
    write_json({{"config", c.engine.to_json()},
                {"world", c.paths.world.string()},
                {"world_spec_seed", in.world->spec.seed},
                {"rounds_logged", recs.size()},
                {"best_round", best},
                {"best_overall", recs[static_cast<std::size_t>(best)].overall},
                {"round0_overall", recs.front().overall},
                {"schema_version", kRoundLogSchema}},
               out / "run_meta.json");
    std::printf("%zu rounds; round 0 %.6f, best round %d %.6f\n", recs.size(), recs.front().overall, best,
                recs[static_cast<std::size_t>(best)].overall);
    return 0;
}

int cmd_score(const Flags& f, const std::string& dataset) {
    RunConfig c = load_config(f);
    const Dataset d = read_dataset_jsonl(fs::path(dataset));
    const fs::path out = c.paths.out;
    auto os = open_out(out / "scores.csv");
    CsvWriter w(os);
    w.row({"token", "pdms", "epdms"});
    double sp = 0, se = 0;
    std::size_t n = 0, missing = 0;
    for (const auto& t : d.tokens) {
        auto it = d.metrics.find(t.id);
        if (it == d.metrics.end()) {
            ++missing;
            continue;
        }
        const double p = pdms(it->second), e = epdms(it->second);
        w.field(t.id).field(p).field(e);
        w.end_row();
        sp += p;
        se += e;
        ++n;
    }
    auto os2 = open_out(out / "scores_summary.csv");
    CsvWriter s(os2);
    s.row({"scored", "without_metrics", "mean_pdms", "mean_epdms"});
    s.field(n).field(missing).field(n ? sp / static_cast<double>(n) : 0.0).field(n ? se / static_cast<double>(n) : 0.0);
    s.end_row();
    std::printf("scored %zu scenes (%zu without metrics)\n", n, missing);
    return 0;
}

int cmd_report(const Flags& f, const std::string& log_path) {
    RunConfig c = load_config(f);
    const fs::path lp = default_log(c, log_path);
    const auto recs = read_round_log(lp);
    if (recs.empty()) throw std::invalid_argument(lp.string() + ": empty round log");
    Inputs in = load_inputs(c, false);
    Workspace ws = workspace(in, c, f.embeddings);
    const int k = ws.k();
    if (recs.front().mixture.size() != k) throw std::invalid_argument("log cluster count does not match the configuration");
    const double n_total = ws.n0_total() + static_cast<double>(std::min<std::int64_t>(c.engine.budget, static_cast<std::int64_t>(ws.pool->size())));
    const fs::path out = c.paths.out / "report";
    {
        auto os = open_out(out / "rounds.csv");
        CsvWriter w(os);
        w.row({"round", "overall"});
        for (const auto& r : recs) {
            w.field(r.round).field(r.overall);
            w.end_row();
        }
    }
    {
        auto os = open_out(out / "clusters.csv");
        CsvWriter w(os);
        w.row({"round", "cluster", "w", "s_bar", "r", "alpha", "delta"});
        for (const auto& r : recs) {
            const Eigen::VectorXd ratio = synthetic_ratio(r.mixture, ws.n0, n_total);
            for (int j = 0; j < k; ++j) {
                w.field(r.round).field(j).field(r.mixture[j]);
                if (r.missing[static_cast<std::size_t>(j)]) w.field(""); else w.field(r.cluster_scores[j]);
                w.field(ratio[j]);
                if (r.gains) w.field((*r.gains)[j]); else w.field("");
                if (r.delta) w.field(static_cast<long long>((*r.delta)[static_cast<std::size_t>(j)])); else w.field("");
                w.end_row();
            }
        }
    }
    {
        auto os = open_out(out / "selection.csv");
        CsvWriter w(os);
        w.row({"round", "rank", "token", "cluster"});
        for (const auto& r : recs)
            for (std::size_t i = 0; i < r.selected.size(); ++i) {
                w.field(r.round).field(i + 1).field(r.selected[i]).field(ws.cl_pool.at(r.selected[i]));
                w.end_row();
            }
    }
    {
        // 2-D PCA over every embedding, real, pool and calibration together.
        std::vector<std::tuple<std::string, const char*, int, const Eigen::VectorXd*>> rows;
        for (const auto& [id, v] : ws.emb_real) rows.emplace_back(id, "real", ws.cl_real.at(id), &v);
        for (const auto& [id, v] : ws.emb_pool) rows.emplace_back(id, "syn", ws.cl_pool.at(id), &v);
        for (const auto& [id, v] : ws.emb_cal) rows.emplace_back(id, "cal", ws.cl_cal.at(id), &v);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), std::get<3>(rows.front())->size());
        for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = std::get<3>(rows[i])->transpose();
        const PcaModel pca = pca_fit(x, std::min<int>(2, static_cast<int>(x.cols())));
        const Eigen::MatrixXd y = pca_transform_rows(pca, x);
        auto os = open_out(out / "projection.csv");
        CsvWriter w(os);
        w.row({"token", "split", "cluster", "x", "y"});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            w.field(std::get<0>(rows[i])).field(std::get<1>(rows[i])).field(std::get<2>(rows[i])).field(y(ii, 0));
            w.field(y.cols() > 1 ? y(ii, 1) : 0.0);
            w.end_row();
        }
    }
    std::printf("report for %zu rounds written to %s\n", recs.size(), out.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AutoScale data engine: mixture optimization over a synthetic scene pool"};
    app.fallthrough();
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "TOML run configuration");
    app.add_option("--seed", f.seed, "engine seed");
    app.add_option("--budget", f.budget, "synthetic budget B");
    app.add_option("--rounds", f.rounds, "optimization rounds T");
    app.add_option("--clusters", f.clusters, "cluster count K");
    app.add_option("--method", f.method, "autoscale, uniform, iwr or chameleon");
    app.add_option("--out", f.out, "output directory");

    std::function<int()> action;
    std::string spec_path, log_path, method, gains_path, dataset;
    bool do_resume = false;

    auto* gen = app.add_subcommand("gen-world", "generate real, synthetic and calibration scenes from a world spec");
    gen->add_option("--world-spec", spec_path, "world spec TOML (defaults to paths.world, then the built-in world)");
    gen->callback([&] { action = [&] { return cmd_gen_world(f, spec_path); }; });

    auto* emb = app.add_subcommand("embed", "train the scene encoder on the real set and embed every pool");
    emb->callback([&] { action = [&] { return cmd_embed(f); }; });

    auto* clu = app.add_subcommand("cluster", "fit clusters on real embeddings and assign every pool");
    clu->add_option("--embeddings", f.embeddings, "directory with real.csv, syn.csv, cal.csv");
    clu->callback([&] { action = [&] { return cmd_cluster(f); }; });

    auto* opt = app.add_subcommand("optimize", "next mixture update from a round log");
    opt->add_option("--log", log_path, "round log (default OUT/rounds.jsonl)");
    opt->add_option("--embeddings", f.embeddings, "directory with real.csv, syn.csv, cal.csv");
    opt->callback([&] { action = [&] { return cmd_optimize(f, log_path); }; });

    auto* sel = app.add_subcommand("select", "select B synthetic scenes with one method");
    sel->add_option("method", method, "autoscale, uniform, iwr or chameleon")
        ->required()
        ->check(CLI::IsMember({"autoscale", "uniform", "iwr", "chameleon"}));
    sel->add_option("--gains", gains_path, "optimize.json whose gains weight the retrieval");
    sel->add_option("--embeddings", f.embeddings, "directory with real.csv, syn.csv, cal.csv");
    sel->callback([&] { action = [&] { return cmd_select(f, method, gains_path); }; });

    auto* run_cmd = app.add_subcommand("run", "full loop against the harness oracle");
    run_cmd->add_flag("--resume", do_resume, "continue OUT/rounds.jsonl instead of starting over");
    run_cmd->add_option("--embeddings", f.embeddings, "directory with real.csv, syn.csv, cal.csv");
    run_cmd->callback([&] { action = [&] { return cmd_run(f, do_resume); }; });

    auto* score = app.add_subcommand("score", "per-scene and aggregate PDMS/EPDMS of a dataset");
    score->add_option("dataset", dataset, "dataset JSONL")->required();
    score->callback([&] { action = [&] { return cmd_score(f, dataset); }; });

    auto* rep = app.add_subcommand("report", "tabulate a round log");
    rep->add_option("--log", log_path, "round log (default OUT/rounds.jsonl)");
    rep->add_option("--embeddings", f.embeddings, "directory with real.csv, syn.csv, cal.csv");
    rep->callback([&] { action = [&] { return cmd_report(f, log_path); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        return action();
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
