#pragma once
// Minimal reverse-mode differentiation over dense matrices. Each op records
// its value and a closure that pushes the output adjoint back to its inputs;
// backward() replays the closures in reverse creation order.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace autoscale::ad {

using Matrix = Eigen::MatrixXd;
using Index = std::vector<int>;

struct Var {
    int id = -1;
};

class Tape {
public:
    Var constant(Matrix value);
    Var variable(Matrix value);

    const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    double scalar(Var v) const { return value(v)(0, 0); }
    // Adjoint of v after backward(); zero-sized when v received no gradient.
    const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    // Seeds d(out)/d(out) = 1 for a 1x1 output.
    void backward(Var out);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_row(Var a, Var row);  // broadcast a 1 x c row over every row of a
    Var mul_row(Var a, Var row);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var abs(Var a);
    Var concat_cols(Var a, Var b);
    Var gather_rows(Var a, const Index& idx);
    Var scatter_add_rows(Var a, const Index& idx, int n_rows);
    Var scale_rows(Var a, const Eigen::VectorXd& s);
    // Row-wise a / max(||a_row||, eps).
    Var normalize_rows(Var a, double eps);
    Var sum(Var a);

    // Multi-head attention over incoming edges. q: n x d (one row per
    // destination node), k, v: E x d (one row per edge), dst[e] names the
    // destination of edge e. Nodes with no incoming edge get a zero row.
    Var edge_attention(Var q, Var k, Var v, const Index& dst, int heads);

    // Sum of elementwise Huber(pred - target) weighted by mask (0/1).
    Var huber_sum(Var pred, const Matrix& target, const Matrix& mask, double delta);

    // Generic scalar op with a caller-supplied value and input gradient
    // (used for the contrastive losses, whose gradients are closed-form).
    Var custom_scalar(const std::vector<Var>& inputs, double value, std::vector<Matrix> input_grads);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Matrix&)> backward;
    };

    Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backward);
    bool any_grad(std::initializer_list<Var> vs) const;
    void accumulate(Var v, const Matrix& g);
    void accumulate_block(Var v, Eigen::Index r, Eigen::Index c, const Matrix& g);

    std::vector<Node> nodes_;
};

}  // namespace autoscale::ad
