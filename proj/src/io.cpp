#include "autoscale/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace autoscale {

using nlohmann::json;


json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("sequence must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw std::invalid_argument("ragged sequence rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    return is;
}


json token_to_json(const Dataset& d, const SceneToken& tok) {
    json j;
    j["id"] = tok.id;
    j["provenance"] = std::string(to_string(tok.provenance));
    const SceneGraph& g = d.graphs.at(tok.id);
    j["t_len"] = g.t_len;
    j["t_hist"] = g.t_hist;
    j["t_fut"] = g.t_fut;
    json nodes = json::array();
    for (const auto& n : g.nodes) nodes.push_back({{"kind", std::string(to_string(n.kind))}, {"seq", matrix_to_json(n.sequence)}});
    j["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& e : g.edges)
        edges.push_back({{"kind", std::string(to_string(e.kind))},
                         {"src", e.src},
                         {"dst", e.dst},
                         {"seq", matrix_to_json(e.sequence)}});
    j["edges"] = std::move(edges);
    if (auto it = d.labels.find(tok.id); it != d.labels.end())
        j["labels"] = {{"command", std::string(to_string(it->second.command))}, {"overlap", it->second.overlap}};
    if (auto it = d.metrics.find(tok.id); it != d.metrics.end()) {
        const SubscoreVector& s = it->second;
        j["metrics"] = {{"nc", s.nc}, {"dac", s.dac}, {"ddc", s.ddc}, {"tlc", s.tlc}, {"ep", s.ep},
                        {"ttc", s.ttc}, {"lk", s.lk},   {"hc", s.hc},   {"ec", s.ec},   {"comf", s.comf}};
    }
    return j;
}

void token_from_json(const json& j, Dataset& into) {
    SceneToken tok{j.at("id").get<std::string>(), provenance_from_string(j.at("provenance").get<std::string>())};
    SceneGraph g;
    g.t_len = j.at("t_len").get<int>();
    g.t_hist = j.at("t_hist").get<int>();
    g.t_fut = j.at("t_fut").get<int>();
    for (const auto& n : j.at("nodes"))
        g.nodes.push_back(Node{node_kind_from_string(n.at("kind").get<std::string>()), matrix_from_json(n.at("seq"))});
    for (const auto& e : j.at("edges"))
        g.edges.push_back(DirectedEdge{edge_kind_from_string(e.at("kind").get<std::string>()), e.at("src").get<int>(),
                                       e.at("dst").get<int>(), matrix_from_json(e.at("seq"))});
    if (j.contains("labels")) {
        const json& l = j["labels"];
        into.labels[tok.id] = SemanticLabels{command_from_string(l.at("command").get<std::string>()),
                                             l.at("overlap").get<bool>()};
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        into.metrics[tok.id] = SubscoreVector{m.at("nc").get<double>(), m.at("dac").get<double>(),
                                              m.at("ddc").get<double>(), m.at("tlc").get<double>(),
                                              m.at("ep").get<double>(), m.at("ttc").get<double>(),
                                              m.at("lk").get<double>(), m.at("hc").get<double>(),
                                              m.at("ec").get<double>(), m.at("comf").get<double>()};
    }
    into.graphs[tok.id] = std::move(g);
    into.tokens.push_back(std::move(tok));
}

void write_dataset_jsonl(const Dataset& d, std::ostream& os) {
    for (const auto& tok : d.tokens) os << token_to_json(d, tok).dump() << '\n';
}

void write_dataset_jsonl(const Dataset& d, const std::filesystem::path& path) {
    auto os = open_out(path);
    write_dataset_jsonl(d, os);
}

Dataset read_dataset_jsonl(std::istream& is, const std::string& name) {
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            token_from_json(json::parse(line), d);
        } catch (const std::exception& e) {
            throw ParseError(name, lineno, e.what());
        }
    }
    return d;
}

Dataset read_dataset_jsonl(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_dataset_jsonl(is, path.string());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

CsvWriter& CsvWriter::field(const std::string& s) {
    if (!first_) os_ << ',';
    first_ = false;
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        os_ << s;
        return *this;
    }
    os_ << '"';
    for (char c : s) {
        if (c == '"') os_ << '"';
        os_ << c;
    }
    os_ << '"';
    return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(long long v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
    os_ << "\r\n";
    first_ = true;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (const auto& f : fields) field(f);
    end_row();
}

std::vector<std::vector<std::string>> read_csv(std::istream& is, const std::string& name) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cur;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    char c;
    auto end_field = [&] {
        row.push_back(cur);
        cur.clear();
        field_started = false;
    };
    while (is.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    is.get(c);
                    cur += '"';
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                cur += c;
            }
            continue;
        }
        if (c == '"' && !field_started && cur.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
            ++line;
        } else {
            cur += c;
            field_started = true;
        }
    }
    if (quoted) throw ParseError(name, line, "unterminated quoted field");
    if (field_started || !cur.empty() || !row.empty()) {
        end_field();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_csv(is, path.string());
}

void write_embeddings_csv(const EmbeddingTable& t, const std::filesystem::path& path) {
    auto os = open_out(path);
    CsvWriter w(os);
    const Eigen::Index d = t.empty() ? 0 : t.begin()->second.size();
    w.field("token_id");
    for (Eigen::Index i = 0; i < d; ++i) w.field("e" + std::to_string(i));
    w.end_row();
    char buf[40];
    for (const auto& [id, v] : t) {
        w.field(id);
        // Round-trip precision so embeddings reload bit-exactly.
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", v[i]);
            w.field(std::string(buf));
        }
        w.end_row();
    }
}

EmbeddingTable read_embeddings_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    EmbeddingTable t;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 2) throw ParseError(path.string(), r + 1, "embedding row needs an id and values");
        Eigen::VectorXd v(static_cast<Eigen::Index>(row.size() - 1));
        try {
            for (std::size_t i = 1; i < row.size(); ++i) v[static_cast<Eigen::Index>(i - 1)] = std::stod(row[i]);
        } catch (const std::exception& e) {
            throw ParseError(path.string(), r + 1, std::string("bad float: ") + e.what());
        }
        t[row[0]] = std::move(v);
    }
    return t;
}

}  // namespace autoscale
