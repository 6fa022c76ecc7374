#include "autoscale/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace autoscale {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

PcaModel pca_fit(const MatrixXd& x, int n) {
    const Eigen::Index m = x.rows(), d = x.cols();
    if (n <= 0 || n > d) throw std::invalid_argument("pca_fit: need 0 < n <= d");
    if (m < n || m < 2) throw std::invalid_argument("pca_fit: need at least n samples");
    PcaModel p;
    p.n = n;
    p.mean = x.colwise().mean().transpose();
    MatrixXd xc = x.rowwise() - p.mean.transpose();
    MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(m - 1);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigen decomposition failed");
    const VectorXd& ev = es.eigenvalues();  // ascending
    const double top = std::max(ev[d - 1], 0.0);
    const double floor = std::max(top, 1e-300) * 1e-12;
    if (ev[d - n] <= floor)
        throw std::runtime_error("pca_fit: data rank is below the requested " + std::to_string(n) + " components");
    p.components.resize(n, d);
    p.variances.resize(n);
    for (int i = 0; i < n; ++i) {
        VectorXd c = es.eigenvectors().col(d - 1 - i);
        Eigen::Index arg;
        c.cwiseAbs().maxCoeff(&arg);
        if (c[arg] < 0) c = -c;
        p.components.row(i) = c.transpose();
        p.variances[i] = ev[d - 1 - i];
    }
    return p;
}

VectorXd pca_transform(const PcaModel& m, const VectorXd& v) {
    if (v.size() != m.mean.size()) throw std::invalid_argument("pca_transform: dimension mismatch");
    return m.components * (v - m.mean);
}

MatrixXd pca_transform_rows(const PcaModel& m, const MatrixXd& x) {
    if (x.cols() != m.mean.size()) throw std::invalid_argument("pca_transform: dimension mismatch");
    return (x.rowwise() - m.mean.transpose()) * m.components.transpose();
}

MatrixXd normalize_rows(const MatrixXd& x) {
    MatrixXd y = x;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double n = y.row(i).norm();
        if (!(n > 0)) throw std::invalid_argument("normalize_rows: zero vector at row " + std::to_string(i));
        y.row(i) /= n;
    }
    return y;
}

namespace {

// m x k matrix of log(weight_j) + log N(x_i | mu_j, diag var_j).
MatrixXd weighted_log_density(const MatrixXd& x, const MatrixXd& means, const MatrixXd& vars, const VectorXd& w) {
    const Eigen::Index p = x.cols();
    MatrixXd inv = vars.cwiseInverse();
    MatrixXd out = -0.5 * (x.cwiseAbs2() * inv.transpose());
    out += x * (means.cwiseProduct(inv)).transpose();
    for (Eigen::Index j = 0; j < means.rows(); ++j) {
        const double c = -0.5 * (means.row(j).cwiseAbs2().cwiseProduct(inv.row(j)).sum() +
                                 vars.row(j).array().log().sum() + static_cast<double>(p) * std::log(2 * std::numbers::pi)) +
                         std::log(w[j]);
        out.col(j).array() += c;
    }
    return out;
}

VectorXd row_logsumexp(const MatrixXd& a) {
    VectorXd out(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double mx = a.row(i).maxCoeff();
        out[i] = mx + std::log((a.row(i).array() - mx).exp().sum());
    }
    return out;
}

MatrixXd kmeanspp(const MatrixXd& x, int k, std::mt19937_64& rng) {
    const Eigen::Index m = x.rows();
    MatrixXd centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, m - 1);
    centers.row(0) = x.row(first(rng));
    VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick < m - 1; ++pick) {
                u -= d2[pick];
                if (u < 0) break;
            }
        } else {
            pick = first(rng);
        }
        centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

}  // namespace

ClusterModel gmm_fit(const MatrixXd& x, int k, std::uint64_t seed, const GmmOptions& opt) {
    const Eigen::Index m = x.rows();
    if (k <= 0) throw std::invalid_argument("gmm_fit: k must be positive");
    if (m < k) throw std::invalid_argument("gmm_fit: fewer samples than clusters");
    if (!x.allFinite()) throw std::invalid_argument("gmm_fit: non-finite input");

    std::mt19937_64 rng(seed);
    ClusterModel cm;
    cm.k = k;
    cm.means = kmeanspp(x, k, rng);
    VectorXd global_var = ((x.rowwise() - x.colwise().mean()).cwiseAbs2().colwise().sum() / static_cast<double>(m))
                              .transpose()
                              .cwiseMax(opt.var_floor);
    cm.variances = global_var.transpose().replicate(k, 1);
    cm.weights = VectorXd::Constant(k, 1.0 / k);

    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iter; ++it) {
        MatrixXd lp = weighted_log_density(x, cm.means, cm.variances, cm.weights);
        VectorXd lse = row_logsumexp(lp);
        const double ll = lse.mean();
        cm.log_likelihood.push_back(ll);
        MatrixXd resp = (lp.colwise() - lse).array().exp().matrix();

        VectorXd nk = resp.colwise().sum().transpose();
        std::vector<Eigen::Index> used;
        for (int j = 0; j < k; ++j) {
            if (nk[j] > 1e-10) {
                cm.means.row(j) = (resp.col(j).transpose() * x) / nk[j];
                MatrixXd diff = x.rowwise() - cm.means.row(j);
                cm.variances.row(j) =
                    ((resp.col(j).transpose() * diff.cwiseAbs2()) / nk[j]).cwiseMax(opt.var_floor);
                cm.weights[j] = nk[j] / static_cast<double>(m);
            } else {
                // Reseed from the point farthest from every current mean.
                VectorXd best = VectorXd::Constant(m, std::numeric_limits<double>::infinity());
                for (int q = 0; q < k; ++q)
                    if (q != j) best = best.cwiseMin((x.rowwise() - cm.means.row(q)).rowwise().squaredNorm());
                for (Eigen::Index u : used) best[u] = -1;
                Eigen::Index far;
                best.maxCoeff(&far);
                used.push_back(far);
                cm.means.row(j) = x.row(far);
                cm.variances.row(j) = global_var.transpose();
                cm.weights[j] = 1.0 / static_cast<double>(m);
                cm.reseeded.push_back(j);
            }
        }
        cm.weights /= cm.weights.sum();
        if (it > 0 && std::abs(ll - prev) < opt.tol) break;
        prev = ll;
    }

    cm.centroids = cm.means;
    for (int j = 0; j < k; ++j) {
        const double n = cm.centroids.row(j).norm();
        if (n > 0) cm.centroids.row(j) /= n;
    }
    cm.n0.assign(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < m; ++i) ++cm.n0[static_cast<std::size_t>(assign(cm, x.row(i).transpose()))];
    return cm;
}

VectorXd responsibilities(const ClusterModel& m, const VectorXd& v) {
    if (v.size() != m.means.cols()) throw std::invalid_argument("assign: dimension mismatch");
    MatrixXd lp = weighted_log_density(v.transpose(), m.means, m.variances, m.weights);
    const double lse = row_logsumexp(lp)[0];
    return (lp.row(0).array() - lse).exp().transpose();
}

int assign(const ClusterModel& m, const VectorXd& v) {
    if (v.size() != m.means.cols()) throw std::invalid_argument("assign: dimension mismatch");
    MatrixXd lp = weighted_log_density(v.transpose(), m.means, m.variances, m.weights);
    Eigen::Index arg = 0;
    lp.row(0).maxCoeff(&arg);
    return static_cast<int>(arg);
}

VectorXd to_model_space(const ClusterModel& m, const VectorXd& raw) {
    const double n = raw.norm();
    if (!(n > 0)) throw std::invalid_argument("to_model_space: zero embedding");
    VectorXd v = raw / n;
    if (m.pca) {
        v = pca_transform(*m.pca, v);
        const double n2 = v.norm();
        if (!(n2 > 0)) throw std::invalid_argument("to_model_space: embedding projects to zero");
        v /= n2;
    }
    return v;
}

int assign_embedding(const ClusterModel& m, const VectorXd& raw) { return assign(m, to_model_space(m, raw)); }

std::map<std::string, int> assign_table(const ClusterModel& m, const EmbeddingTable& t) {
    std::map<std::string, int> out;
    for (const auto& [id, v] : t) out[id] = assign_embedding(m, v);
    return out;
}

ClusterModel fit_clusters(const EmbeddingTable& real, int k, std::uint64_t seed, int pca_dim, const GmmOptions& opt) {
    if (real.empty()) throw std::invalid_argument("fit_clusters: no embeddings");
    const Eigen::Index d = real.begin()->second.size();
    MatrixXd x(static_cast<Eigen::Index>(real.size()), d);
    Eigen::Index i = 0;
    for (const auto& [id, v] : real) {
        if (v.size() != d) throw std::invalid_argument("fit_clusters: ragged embeddings at " + id);
        x.row(i++) = v.transpose();
    }
    x = normalize_rows(x);
    std::optional<PcaModel> pca;
    if (pca_dim > 0 && pca_dim < d) {
        pca = pca_fit(x, pca_dim);
        x = normalize_rows(pca_transform_rows(*pca, x));
    }
    ClusterModel cm = gmm_fit(x, k, seed, opt);
    cm.pca = std::move(pca);
    return cm;
}

SimilarityMatrix rbf_similarity(const MatrixXd& centroids, double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("rbf_similarity: sigma must be positive");
    const Eigen::Index k = centroids.rows();
    SimilarityMatrix s;
    s.sigma = sigma;
    s.r.resize(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        s.r(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < k; ++b) {
            const double c = std::clamp(centroids.row(a).dot(centroids.row(b)), -1.0, 1.0);
            const double dc = 1.0 - c;
            s.r(a, b) = s.r(b, a) = std::exp(-dc * dc / (2 * sigma * sigma));
        }
    }
    return s;
}

VectorXd calibration_mixture(const std::vector<int>& cluster_of_cal, int k) {
    if (cluster_of_cal.empty()) throw std::invalid_argument("calibration_mixture: empty calibration set");
    VectorXd pi = VectorXd::Zero(k);
    for (int c : cluster_of_cal) {
        if (c < 0 || c >= k) throw std::invalid_argument("calibration_mixture: cluster id out of range");
        pi[c] += 1.0;
    }
    return pi / static_cast<double>(cluster_of_cal.size());
}

ClusterScores aggregate_scores(const std::map<std::string, double>& scores, const std::map<std::string, int>& cluster_ids,
                               int k) {
    if (scores.empty()) throw std::invalid_argument("aggregate_scores: empty calibration set");
    ClusterScores cs;
    cs.s_bar = VectorXd::Zero(k);
    cs.counts.assign(static_cast<std::size_t>(k), 0);
    for (const auto& [id, s] : scores) {
        auto it = cluster_ids.find(id);
        if (it == cluster_ids.end()) throw std::invalid_argument("aggregate_scores: unassigned token " + id);
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("aggregate_scores: score outside [0,1] for " + id);
        cs.s_bar[it->second] += s;
        ++cs.counts[static_cast<std::size_t>(it->second)];
    }
    cs.missing.assign(static_cast<std::size_t>(k), false);
    for (int j = 0; j < k; ++j) {
        if (cs.counts[static_cast<std::size_t>(j)] == 0) {
            cs.missing[static_cast<std::size_t>(j)] = true;
            cs.s_bar[j] = std::numeric_limits<double>::quiet_NaN();
        } else {
            cs.s_bar[j] /= cs.counts[static_cast<std::size_t>(j)];
        }
    }
    return cs;
}

double overall_score(const VectorXd& pi, const VectorXd& s_bar) {
    if (pi.size() != s_bar.size()) throw std::invalid_argument("overall_score: size mismatch");
    double total = 0.0;
    for (Eigen::Index j = 0; j < pi.size(); ++j)
        if (pi[j] != 0.0) total += pi[j] * s_bar[j];
    return total;
}

double overall_score(const VectorXd& pi, const ClusterScores& s) {
    if (pi.size() != s.s_bar.size()) throw std::invalid_argument("overall_score: size mismatch");
    double total = 0.0;
    for (Eigen::Index j = 0; j < pi.size(); ++j)
        if (!s.missing[static_cast<std::size_t>(j)]) total += pi[j] * s.s_bar[j];
    return total;
}

namespace {

json vec_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

VectorXd vec_from(const json& j) {
    auto s = j.get<std::vector<double>>();
    return Eigen::Map<VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

json to_json(const ClusterModel& m) {
    json j;
    j["k"] = m.k;
    j["weights"] = vec_json(m.weights);
    j["means"] = matrix_to_json(m.means);
    j["covariances"] = matrix_to_json(m.variances);
    j["centroids"] = matrix_to_json(m.centroids);
    j["n0"] = m.n0;
    j["pi"] = vec_json(m.pi);
    j["log_likelihood"] = m.log_likelihood;
    j["reseeded"] = m.reseeded;
    if (m.pca) {
        j["pca"] = {{"n", m.pca->n},
                    {"mean", vec_json(m.pca->mean)},
                    {"components", matrix_to_json(m.pca->components)},
                    {"variances", vec_json(m.pca->variances)}};
    } else {
        j["pca"] = nullptr;
    }
    return j;
}

ClusterModel cluster_model_from_json(const json& j) {
    ClusterModel m;
    m.k = j.at("k").get<int>();
    m.weights = vec_from(j.at("weights"));
    m.means = matrix_from_json(j.at("means"));
    m.variances = matrix_from_json(j.at("covariances"));
    m.centroids = matrix_from_json(j.at("centroids"));
    m.n0 = j.at("n0").get<std::vector<std::int64_t>>();
    m.pi = vec_from(j.at("pi"));
    if (j.contains("log_likelihood")) m.log_likelihood = j["log_likelihood"].get<std::vector<double>>();
    if (j.contains("reseeded")) m.reseeded = j["reseeded"].get<std::vector<int>>();
    if (j.contains("pca") && !j["pca"].is_null()) {
        PcaModel p;
        p.n = j["pca"].at("n").get<int>();
        p.mean = vec_from(j["pca"].at("mean"));
        p.components = matrix_from_json(j["pca"].at("components"));
        p.variances = vec_from(j["pca"].at("variances"));
        m.pca = std::move(p);
    }
    if (m.means.rows() != m.k || m.variances.rows() != m.k || m.weights.size() != m.k)
        throw std::invalid_argument("cluster model: inconsistent sizes");
    return m;
}

void write_cluster_model(const ClusterModel& m, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << to_json(m).dump(1) << '\n';
}

ClusterModel read_cluster_model(const std::filesystem::path& path) {
    auto is = open_in(path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, e.what());
    }
    return cluster_model_from_json(j);
}

void write_assignments_csv(const std::map<std::string, int>& a, const std::filesystem::path& path) {
    auto os = open_out(path);
    CsvWriter w(os);
    w.row({"token_id", "cluster_id"});
    for (const auto& [id, c] : a) {
        w.field(id).field(c);
        w.end_row();
    }
}

std::map<std::string, int> read_assignments_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    std::map<std::string, int> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) throw ParseError(path.string(), r + 1, "expected token_id,cluster_id");
        try {
            out[rows[r][0]] = std::stoi(rows[r][1]);
        } catch (const std::exception&) {
            throw ParseError(path.string(), r + 1, "bad cluster id '" + rows[r][1] + "'");
        }
    }
    return out;
}

}  // namespace autoscale
