#include "autoscale/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace autoscale::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("autodiff shape mismatch: ") + what);
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
        if (requires_grad(v)) return true;
    return false;
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

void Tape::accumulate_block(Var v, Eigen::Index r, Eigen::Index c, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad.block(r, c, g.rows(), g.cols()) += g;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) {
    return push(std::move(value), true, [](Tape&, const Matrix&) {});
}

void Tape::backward(Var out) {
    require(value(out).rows() == 1 && value(out).cols() == 1, "backward needs a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(out.id)].grad = Matrix::Ones(1, 1);
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
        // Copy: the closure may push into nodes_ grads but never resizes nodes_.
        const Matrix g = n.grad;
        n.backward(*this, g);
    }
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul");
    return push(value(a) * value(b), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var Tape::add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add");
    return push(value(a) + value(b), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub");
    return push(value(a) - value(b), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) t.accumulate(b, -g);
    });
}

Var Tape::mul(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "mul");
    return push(value(a).cwiseProduct(value(b)), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
        if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, any_grad({a}), [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var Tape::add_row(Var a, Var row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row");
    Matrix out = value(a).rowwise() + value(row).row(0);
    return push(std::move(out), any_grad({a, row}), [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
    });
}

Var Tape::mul_row(Var a, Var row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "mul_row");
    Matrix out = value(a).array().rowwise() * value(row).row(0).array();
    return push(std::move(out), any_grad({a, row}), [a, row](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, (g.array().rowwise() * t.value(row).row(0).array()).matrix());
        if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(t.value(a)).colwise().sum());
    });
}

Var Tape::relu(Var a) {
    return push(value(a).cwiseMax(0.0), any_grad({a}), [a](Tape& t, const Matrix& g) {
        t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
    });
}

Var Tape::sigmoid(Var a) {
    Matrix s = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    Var out = push(std::move(s), any_grad({a}), nullptr);
    if (requires_grad(out)) {
        nodes_[static_cast<std::size_t>(out.id)].backward = [a, out](Tape& t, const Matrix& g) {
            const Matrix& s = t.value(out);
            t.accumulate(a, (g.array() * s.array() * (1.0 - s.array())).matrix());
        };
    }
    return out;
}

Var Tape::abs(Var a) {
    return push(value(a).cwiseAbs(), any_grad({a}), [a](Tape& t, const Matrix& g) {
        t.accumulate(a, (g.array() * t.value(a).array().sign()).matrix());
    });
}

Var Tape::concat_cols(Var a, Var b) {
    require(value(a).rows() == value(b).rows(), "concat_cols");
    const Eigen::Index ca = value(a).cols(), cb = value(b).cols();
    Matrix out(value(a).rows(), ca + cb);
    out << value(a), value(b);
    return push(std::move(out), any_grad({a, b}), [a, b, ca, cb](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g.leftCols(ca));
        if (t.requires_grad(b)) t.accumulate(b, g.rightCols(cb));
    });
}

Var Tape::gather_rows(Var a, const Index& idx) {
    const Matrix& src = value(a);
    Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < src.rows(), "gather_rows index");
        out.row(static_cast<Eigen::Index>(r)) = src.row(idx[r]);
    }
    return push(std::move(out), any_grad({a}), [a, idx](Tape& t, const Matrix& g) {
        Matrix acc = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
        for (std::size_t r = 0; r < idx.size(); ++r) acc.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
        t.accumulate(a, acc);
    });
}

Var Tape::scatter_add_rows(Var a, const Index& idx, int n_rows) {
    const Matrix& src = value(a);
    require(static_cast<Eigen::Index>(idx.size()) == src.rows(), "scatter_add_rows");
    Matrix out = Matrix::Zero(n_rows, src.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < n_rows, "scatter_add_rows index");
        out.row(idx[r]) += src.row(static_cast<Eigen::Index>(r));
    }
    return push(std::move(out), any_grad({a}), [a, idx](Tape& t, const Matrix& g) {
        Matrix acc(static_cast<Eigen::Index>(idx.size()), g.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) acc.row(static_cast<Eigen::Index>(r)) = g.row(idx[r]);
        t.accumulate(a, acc);
    });
}

Var Tape::scale_rows(Var a, const Eigen::VectorXd& s) {
    require(s.size() == value(a).rows(), "scale_rows");
    Matrix out = s.asDiagonal() * value(a);
    return push(std::move(out), any_grad({a}), [a, s](Tape& t, const Matrix& g) { t.accumulate(a, s.asDiagonal() * g); });
}

Var Tape::normalize_rows(Var a, double eps) {
    const Matrix& x = value(a);
    Eigen::VectorXd norms = x.rowwise().norm();
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r) / std::max(norms[r], eps);
    return push(std::move(out), any_grad({a}), [a, norms, eps](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(a);
        Matrix acc(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (norms[r] <= eps) {
                acc.row(r) = g.row(r) / eps;
            } else {
                const double n = norms[r];
                const double proj = g.row(r).dot(x.row(r)) / (n * n);
                acc.row(r) = (g.row(r) - proj * x.row(r)) / n;
            }
        }
        t.accumulate(a, acc);
    });
}

Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), any_grad({a}), [a](Tape& t, const Matrix& g) {
        t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
    });
}

Var Tape::edge_attention(Var q, Var k, Var v, const Index& dst, int heads) {
    const Matrix& Q = value(q);
    const Matrix& K = value(k);
    const Matrix& V = value(v);
    const Eigen::Index n = Q.rows(), d = Q.cols(), E = K.rows();
    require(K.cols() == d && V.cols() == d && V.rows() == E, "edge_attention dims");
    require(static_cast<Eigen::Index>(dst.size()) == E, "edge_attention dst");
    require(heads > 0 && d % heads == 0, "edge_attention heads must divide width");
    const Eigen::Index dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix scores(E, heads);
    for (Eigen::Index e = 0; e < E; ++e) {
        require(dst[static_cast<std::size_t>(e)] >= 0 && dst[static_cast<std::size_t>(e)] < n, "edge_attention dst index");
        const Eigen::Index i = dst[static_cast<std::size_t>(e)];
        for (int h = 0; h < heads; ++h)
            scores(e, h) = Q.row(i).segment(h * dh, dh).dot(K.row(e).segment(h * dh, dh)) * inv_sqrt;
    }
    // Softmax over the incoming edges of each destination, per head.
    Matrix row_max = Matrix::Constant(n, heads, -std::numeric_limits<double>::infinity());
    for (Eigen::Index e = 0; e < E; ++e)
        row_max.row(dst[static_cast<std::size_t>(e)]) = row_max.row(dst[static_cast<std::size_t>(e)]).cwiseMax(scores.row(e));
    Matrix alpha(E, heads);
    Matrix denom = Matrix::Zero(n, heads);
    for (Eigen::Index e = 0; e < E; ++e) {
        const Eigen::Index i = dst[static_cast<std::size_t>(e)];
        alpha.row(e) = (scores.row(e) - row_max.row(i)).array().exp().matrix();
        denom.row(i) += alpha.row(e);
    }
    Matrix out = Matrix::Zero(n, d);
    for (Eigen::Index e = 0; e < E; ++e) {
        const Eigen::Index i = dst[static_cast<std::size_t>(e)];
        alpha.row(e) = alpha.row(e).cwiseQuotient(denom.row(i));
        for (int h = 0; h < heads; ++h) out.row(i).segment(h * dh, dh) += alpha(e, h) * V.row(e).segment(h * dh, dh);
    }

    return push(std::move(out), any_grad({q, k, v}), [q, k, v, dst, heads, dh, inv_sqrt, alpha](Tape& t, const Matrix& g) {
        const Matrix& Q = t.value(q);
        const Matrix& K = t.value(k);
        const Matrix& V = t.value(v);
        const Eigen::Index E = K.rows();
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        Matrix dalpha(E, heads);
        Matrix weighted = Matrix::Zero(Q.rows(), heads);  // sum_e alpha * dalpha per (node, head)
        for (Eigen::Index e = 0; e < E; ++e) {
            const Eigen::Index i = dst[static_cast<std::size_t>(e)];
            for (int h = 0; h < heads; ++h) {
                auto gi = g.row(i).segment(h * dh, dh);
                dV.row(e).segment(h * dh, dh) += alpha(e, h) * gi;
                dalpha(e, h) = gi.dot(V.row(e).segment(h * dh, dh));
                weighted(i, h) += alpha(e, h) * dalpha(e, h);
            }
        }
        for (Eigen::Index e = 0; e < E; ++e) {
            const Eigen::Index i = dst[static_cast<std::size_t>(e)];
            for (int h = 0; h < heads; ++h) {
                const double ds = alpha(e, h) * (dalpha(e, h) - weighted(i, h)) * inv_sqrt;
                dQ.row(i).segment(h * dh, dh) += ds * K.row(e).segment(h * dh, dh);
                dK.row(e).segment(h * dh, dh) += ds * Q.row(i).segment(h * dh, dh);
            }
        }
        t.accumulate(q, dQ);
        t.accumulate(k, dK);
        t.accumulate(v, dV);
    });
}

Var Tape::huber_sum(Var pred, const Matrix& target, const Matrix& mask, double delta) {
    const Matrix& p = value(pred);
    require(p.rows() == target.rows() && p.cols() == target.cols(), "huber_sum target");
    require(mask.rows() == target.rows() && mask.cols() == target.cols(), "huber_sum mask");
    Matrix r = p - target;
    double total = 0.0;
    Matrix dr(r.rows(), r.cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double x = r(i), ax = std::abs(x);
        if (ax <= delta) {
            total += mask(i) * 0.5 * x * x;
            dr(i) = mask(i) * x;
        } else {
            total += mask(i) * delta * (ax - 0.5 * delta);
            dr(i) = mask(i) * delta * (x > 0 ? 1.0 : -1.0);
        }
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), any_grad({pred}), [pred, dr](Tape& t, const Matrix& g) { t.accumulate(pred, dr * g(0, 0)); });
}

Var Tape::custom_scalar(const std::vector<Var>& inputs, double value, std::vector<Matrix> input_grads) {
    require(inputs.size() == input_grads.size(), "custom_scalar gradients");
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    Matrix out(1, 1);
    out(0, 0) = value;
    return push(std::move(out), needs, [inputs, grads = std::move(input_grads)](Tape& t, const Matrix& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (grads[i].size() != 0) t.accumulate(inputs[i], grads[i] * g(0, 0));
    });
}

}  // namespace autoscale::ad
