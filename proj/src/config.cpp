#include "autoscale/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace autoscale {

namespace {

std::string where(const std::string& source, const toml::node& n) {
    const auto& b = n.source().begin;
    if (!b) return source;
    return source + ":" + std::to_string(b.line) + ":" + std::to_string(b.column);
}

// Walks one table, remembering which keys were consumed so leftovers can be
// reported as unknown.
class TableReader {
public:
    TableReader(const toml::table& t, std::string source, std::string prefix)
        : t_(t), source_(std::move(source)), prefix_(std::move(prefix)) {}

    const toml::node* node(std::string_view key) {
        seen_.insert(std::string(key));
        return t_.get(key);
    }

    [[noreturn]] void fail(const toml::node& n, std::string_view key, const std::string& msg) const {
        throw ConfigError(where(source_, n) + ": " + prefix_ + std::string(key) + ": " + msg);
    }

    void get(std::string_view key, double& out) {
        const toml::node* n = node(key);
        if (!n) return;
        if (auto v = n->value<double>()) out = *v;
        else fail(*n, key, "expected a number");
    }

    template <class Int>
    void get_int(std::string_view key, Int& out, long long lo) {
        const toml::node* n = node(key);
        if (!n) return;
        if (!n->is_integer()) fail(*n, key, "expected an integer");
        const long long v = n->as_integer()->get();
        if (v < lo) fail(*n, key, "must be >= " + std::to_string(lo));
        out = static_cast<Int>(v);
    }

    void get(std::string_view key, std::string& out) {
        const toml::node* n = node(key);
        if (!n) return;
        if (!n->is_string()) fail(*n, key, "expected a string");
        out = n->as_string()->get();
    }

    void get(std::string_view key, std::vector<double>& out) {
        const toml::node* n = node(key);
        if (!n) return;
        const toml::array* arr = n->as_array();
        if (!arr) fail(*n, key, "expected an array of numbers");
        out.clear();
        for (const auto& e : *arr) {
            auto v = e.value<double>();
            if (!v) fail(e, key, "expected an array of numbers");
            out.push_back(*v);
        }
    }

    const toml::table* table(std::string_view key) {
        const toml::node* n = node(key);
        if (!n) return nullptr;
        if (!n->is_table()) fail(*n, key, "expected a table");
        return n->as_table();
    }

    void finish() const {
        for (const auto& [k, v] : t_)
            if (!seen_.count(std::string(k.str())))
                throw ConfigError(where(source_, v) + ": unknown key '" + prefix_ + std::string(k.str()) + "'");
    }

    const std::string& source() const { return source_; }

private:
    const toml::table& t_;
    std::string source_;
    std::string prefix_;
    std::set<std::string> seen_;
};

toml::table parse_toml(std::string_view text, const std::string& source) {
    try {
        return toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        const auto& b = e.source().begin;
        throw ConfigError(source + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) + ": " +
                          std::string(e.description()));
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
}

toml::array to_array(const std::vector<double>& v) {
    toml::array a;
    for (double x : v) a.push_back(x);
    return a;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& source, const std::filesystem::path& base_dir) {
    toml::table root = parse_toml(text, source);
    RunConfig c;
    EngineConfig& e = c.engine;
    TableReader r(root, source, "");
    r.get_int("budget", e.budget, 0);
    r.get_int("rounds", e.rounds, 1);
    r.get_int("clusters", e.clusters, 1);
    r.get("sigma", e.sigma);
    r.get("lambda_reg", e.lambda_reg);
    r.get("eps_max", e.eps_max);
    r.get_int("seed", e.seed, 0);
    if (const toml::node* n = r.node("method")) {
        if (!n->is_string()) r.fail(*n, "method", "expected a string");
        try {
            e.method = method_from_string(n->as_string()->get());
        } catch (const std::invalid_argument& ex) {
            r.fail(*n, "method", ex.what());
        }
    }
    r.get_int("pca_dim", e.pca_dim, 1);
    r.get("lambda_c", e.lambda_c);
    r.get_int("feasible_samples", e.feasible_samples, 1);

    if (const toml::table* t = r.table("paths")) {
        TableReader p(*t, source, "paths.");
        std::string real, syn, cal, out, world;
        p.get("real", real);
        p.get("syn", syn);
        p.get("cal", cal);
        p.get("out", out);
        p.get("world", world);
        p.finish();
        c.paths = {resolve(base_dir, real), resolve(base_dir, syn), resolve(base_dir, cal), resolve(base_dir, out),
                   resolve(base_dir, world)};
    }
    if (const toml::table* t = r.table("anchors")) {
        TableReader a(*t, source, "anchors.");
        a.get_int("max_per_cluster", e.anchors.max_per_cluster, 1);
        a.get("threshold", e.anchors.threshold);
        a.finish();
    }
    if (const toml::table* t = r.table("embedding")) {
        TableReader m(*t, source, "embedding.");
        m.get_int("dim", e.embedding.dim, 1);
        m.get_int("layers", e.embedding.layers, 0);
        m.get_int("heads", e.embedding.heads, 1);
        m.get_int("steps", e.embedding.steps, 0);
        m.get_int("batch_size", e.embedding.batch_size, 2);
        m.get("learning_rate", e.embedding.learning_rate);
        m.get("lambda", e.embedding.lambda);
        m.finish();
    }
    r.finish();
    try {
        e.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(source + ": " + ex.what());
    }
    return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_text(path), path.string(), path.parent_path());
}

std::string to_toml(const RunConfig& c) {
    const EngineConfig& e = c.engine;
    toml::table paths;
    auto put = [&](const char* k, const std::filesystem::path& p) {
        if (!p.empty()) paths.insert(k, p.string());
    };
    put("real", c.paths.real);
    put("syn", c.paths.syn);
    put("cal", c.paths.cal);
    put("out", c.paths.out);
    put("world", c.paths.world);
    toml::table t{
        {"budget", e.budget},
        {"rounds", e.rounds},
        {"clusters", e.clusters},
        {"sigma", e.sigma},
        {"lambda_reg", e.lambda_reg},
        {"eps_max", e.eps_max},
        {"seed", static_cast<std::int64_t>(e.seed)},
        {"method", std::string(to_string(e.method))},
        {"pca_dim", e.pca_dim},
        {"lambda_c", e.lambda_c},
        {"feasible_samples", e.feasible_samples},
        {"anchors", toml::table{{"max_per_cluster", e.anchors.max_per_cluster}, {"threshold", e.anchors.threshold}}},
        {"embedding", toml::table{{"dim", e.embedding.dim},
                                  {"layers", e.embedding.layers},
                                  {"heads", e.embedding.heads},
                                  {"steps", e.embedding.steps},
                                  {"batch_size", e.embedding.batch_size},
                                  {"learning_rate", e.embedding.learning_rate},
                                  {"lambda", e.embedding.lambda}}},
    };
    if (!paths.empty()) t.insert("paths", std::move(paths));
    std::ostringstream ss;
    ss << t << "\n";
    return ss.str();
}

sim::WorldSpec parse_world_spec(std::string_view text, const std::string& source) {
    toml::table root = parse_toml(text, source);
    sim::WorldSpec s;
    TableReader r(root, source, "");
    r.get_int("archetypes", s.archetypes, 1);
    r.get_int("n_real", s.n_real, 1);
    r.get_int("n_pool", s.n_pool, 1);
    r.get_int("n_cal", s.n_cal, 1);
    r.get("real_share", s.real_share);
    r.get("a", s.a);
    r.get("b", s.b);
    r.get("m0", s.m0);
    r.get("g", s.g);
    if (const toml::node* n = r.node("transfer")) {
        const toml::array* rows = n->as_array();
        if (!rows) r.fail(*n, "transfer", "expected an array of rows");
        const auto k = static_cast<int>(rows->size());
        s.transfer.resize(k, k);
        for (int i = 0; i < k; ++i) {
            const toml::array* row = (*rows)[static_cast<std::size_t>(i)].as_array();
            if (!row || static_cast<int>(row->size()) != k) r.fail(*n, "transfer", "must be a square array of rows");
            for (int j = 0; j < k; ++j) {
                auto v = (*row)[static_cast<std::size_t>(j)].value<double>();
                if (!v) r.fail(*n, "transfer", "entries must be numbers");
                s.transfer(i, j) = *v;
            }
        }
    }
    r.get("noise_sigma", s.noise_sigma);
    r.get_int("draws", s.draws, 1);
    r.get_int("seed", s.seed, 0);
    r.finish();
    s.complete();
    try {
        s.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(source + ": " + ex.what());
    }
    return s;
}

std::string to_toml(const sim::WorldSpec& s) {
    toml::array transfer;
    for (int i = 0; i < s.transfer.rows(); ++i) {
        toml::array row;
        for (int j = 0; j < s.transfer.cols(); ++j) row.push_back(s.transfer(i, j));
        transfer.push_back(std::move(row));
    }
    toml::table t{
        {"archetypes", s.archetypes},
        {"n_real", s.n_real},
        {"n_pool", s.n_pool},
        {"n_cal", s.n_cal},
        {"real_share", to_array(s.real_share)},
        {"a", to_array(s.a)},
        {"b", to_array(s.b)},
        {"m0", to_array(s.m0)},
        {"g", s.g},
        {"transfer", std::move(transfer)},
        {"noise_sigma", s.noise_sigma},
        {"draws", s.draws},
        {"seed", static_cast<std::int64_t>(s.seed)},
    };
    std::ostringstream ss;
    ss << t << "\n";
    return ss.str();
}

}  // namespace autoscale

namespace autoscale::sim {

WorldSpec read_world_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_world_spec(ss.str(), path.string());
}

}  // namespace autoscale::sim
