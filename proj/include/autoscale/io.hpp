#pragma once
// File formats: newline-delimited JSON datasets, RFC-4180 CSV tables and
// embedding tables.
//
// Dataset JSONL record (one line per token):
//   {"id": str, "provenance": "real"|"synthetic"|"calibration",
//    "t_len": int, "t_hist": int, "t_fut": int,
//    "nodes": [{"kind": str, "seq": [[f, ...], ...]}, ...],
//    "edges": [{"kind": str, "src": int, "dst": int, "seq": [[f, ...], ...]}, ...],
//    "labels": {"command": "straight"|"left"|"right"|"stop", "overlap": bool},
//    "metrics": {"nc": f, "dac": f, "ddc": f, "tlc": f, "ep": f, "ttc": f,
//                "lk": f, "hc": f, "ec": f, "comf": f}}      (metrics optional)

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoscale/scene.hpp"

namespace autoscale {

// Thrown by every reader; carries the offending file and 1-based line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}
    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

// Row-major nested arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

// Output streams create missing parent directories; both throw
// std::runtime_error when the file cannot be opened.
std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

nlohmann::json token_to_json(const Dataset& d, const SceneToken& tok);
void token_from_json(const nlohmann::json& j, Dataset& into);

void write_dataset_jsonl(const Dataset& d, std::ostream& os);
void write_dataset_jsonl(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset_jsonl(std::istream& is, const std::string& name = "<stream>");
Dataset read_dataset_jsonl(const std::filesystem::path& path);

// CSV writer: quotes fields containing separators, quotes or newlines; floats
// at 9 significant digits.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}
    CsvWriter& field(const std::string& s);
    CsvWriter& field(const char* s) { return field(std::string(s)); }
    CsvWriter& field(double v);
    CsvWriter& field(long long v);
    CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
    CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
    void end_row();
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& os_;
    bool first_ = true;
};

std::string format_double(double v);

std::vector<std::vector<std::string>> read_csv(std::istream& is, const std::string& name = "<stream>");
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

// token_id followed by d float columns.
using EmbeddingTable = std::map<std::string, Eigen::VectorXd>;
void write_embeddings_csv(const EmbeddingTable& t, const std::filesystem::path& path);
EmbeddingTable read_embeddings_csv(const std::filesystem::path& path);

}  // namespace autoscale
