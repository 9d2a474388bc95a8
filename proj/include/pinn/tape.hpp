#pragma once

// Reverse-mode recording over batches of truncated-Taylor series. Every node
// value is a stack of (batch x width) coefficient blocks, c[0] being the plain
// value and c[k] the k-th Taylor coefficient along the seeded direction, so one
// backward sweep yields parameter gradients of losses built from derivative
// coefficients. Parameters live in one flat vector owned by the caller; the
// tape reads them through offsets and accumulates into a flat gradient of the
// same length. A tape records one architecture and is re-run (forward, then
// backward) per optimizer step; it is not shareable between concurrent users.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pinn/common.hpp"

namespace pinn {

using Arr = Eigen::ArrayXXd;

struct Coeffs {
    std::vector<Arr> c;

    int order() const { return static_cast<int>(c.size()) - 1; }
    void resize(int order, Eigen::Index rows, Eigen::Index cols) {
        c.assign(static_cast<std::size_t>(order) + 1, Arr::Zero(rows, cols));
    }
    void set_zero() {
        for (auto& a : c) a.setZero();
    }
};

// Weight (rows x cols, column-major) at theta[w_off..]; bias at theta[b_off..]
// when b_off >= 0.
struct LinearSpec {
    Eigen::Index w_off = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index b_off = -1;
};

class Tape {
  public:
    enum class Op {
        Input,
        Linear,
        Add,
        Sub,
        Mul,
        Scale,
        AddScalar,
        Tanh,
        Sigmoid,
        Exp,
        LogSigmoid,
        Recip,
        Sqrt,
        Max,
        Clip,
        Slice,
        RowMean,
        Broadcast,
    };

    Tape(const Eigen::VectorXd* theta, Eigen::VectorXd* grad, Eigen::Index batch, int order)
        : theta_(theta), grad_(grad), batch_(batch), order_(order) {
        if (order_ < 0) throw StructuralError("tape order must be non-negative");
    }

    Eigen::Index batch() const { return batch_; }
    int order() const { return order_; }

    // Constant input block; direction >= 0 seeds c[1] with that column's unit.
    int input(const Arr& points, int direction = -1) {
        if (points.rows() != batch_) throw StructuralError("input batch size mismatch");
        Node n = make_node(Op::Input, points.cols());
        n.val.c[0] = points;
        if (direction >= 0) {
            if (order_ < 1) throw StructuralError("seeded input needs tape order >= 1");
            if (direction >= points.cols()) throw StructuralError("seed direction out of range");
            n.val.c[1].col(direction).setOnes();
        }
        return push(std::move(n));
    }

    int linear(int a, const LinearSpec& spec) {
        if (width(a) != spec.cols) throw StructuralError("linear input width mismatch");
        Node n = make_node(Op::Linear, spec.rows, a);
        n.lin = spec;
        return push(std::move(n));
    }

    int add(int a, int b) { return push(binary(Op::Add, a, b)); }
    int sub(int a, int b) { return push(binary(Op::Sub, a, b)); }
    int mul(int a, int b) { return push(binary(Op::Mul, a, b)); }
    int max(int a, int b) { return push(binary(Op::Max, a, b)); }

    int scale(int a, double s) {
        Node n = make_node(Op::Scale, width(a), a);
        n.s0 = s;
        return push(std::move(n));
    }
    int add_scalar(int a, double s) {
        Node n = make_node(Op::AddScalar, width(a), a);
        n.s0 = s;
        return push(std::move(n));
    }
    int clip(int a, double lo, double hi) {
        Node n = make_node(Op::Clip, width(a), a);
        n.s0 = lo;
        n.s1 = hi;
        return push(std::move(n));
    }
    int slice(int a, Eigen::Index col0, Eigen::Index ncols) {
        if (col0 < 0 || col0 + ncols > width(a)) throw StructuralError("slice out of range");
        Node n = make_node(Op::Slice, ncols, a);
        n.col0 = col0;
        return push(std::move(n));
    }

    int tanh(int a) { return push(unary(Op::Tanh, a)); }
    int sigmoid(int a) { return push(unary(Op::Sigmoid, a)); }
    int exp(int a) { return push(unary(Op::Exp, a)); }
    int log_sigmoid(int a) { return push(unary(Op::LogSigmoid, a)); }
    int recip(int a) { return push(unary(Op::Recip, a)); }
    int sqrt(int a) { return push(unary(Op::Sqrt, a)); }

    int row_mean(int a) { return push(make_node(Op::RowMean, 1, a)); }
    int broadcast(int a, Eigen::Index ncols) {
        if (width(a) != 1) throw StructuralError("broadcast expects single-column input");
        return push(make_node(Op::Broadcast, ncols, a));
    }

    const Coeffs& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    Coeffs& adjoint(int id) { return nodes_[static_cast<std::size_t>(id)].adj; }
    Eigen::Index width(int id) const { return nodes_[static_cast<std::size_t>(id)].val.c[0].cols(); }

    // Recompute every node from the current parameter vector, in record order.
    void forward() {
        for (auto& n : nodes_) compute(n);
    }

    void zero_adjoints() {
        for (auto& n : nodes_) n.adj.set_zero();
    }

    // Propagate seeded adjoints back to inputs; parameter gradients accumulate
    // into the flat gradient vector (caller zeroes it between steps).
    void backward() {
        if (!grad_) throw StructuralError("tape has no gradient buffer");
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) propagate(*it);
    }

  private:
    struct Node {
        Op op;
        int a = -1, b = -1;
        LinearSpec lin;
        double s0 = 0.0, s1 = 0.0;
        Eigen::Index col0 = 0;
        Coeffs val, aux, adj;
    };

    Node make_node(Op op, Eigen::Index cols, int a = -1, int b = -1) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.val.resize(order_, batch_, cols);
        n.adj.resize(order_, batch_, cols);
        return n;
    }
    Node binary(Op op, int a, int b) {
        if (width(a) != width(b)) throw StructuralError("binary op width mismatch");
        return make_node(op, width(a), a, b);
    }
    Node unary(Op op, int a) { return make_node(op, width(a), a); }

    int push(Node&& n) {
        nodes_.push_back(std::move(n));
        compute(nodes_.back());
        return static_cast<int>(nodes_.size()) - 1;
    }

    Eigen::Map<const Eigen::MatrixXd> weight(const LinearSpec& s) const {
        return {theta_->data() + s.w_off, s.rows, s.cols};
    }
    Eigen::Map<const Eigen::VectorXd> bias(const LinearSpec& s) const {
        return {theta_->data() + s.b_off, s.rows};
    }

    void compute(Node& n) {
        const int C = order_;
        switch (n.op) {
            case Op::Input:
                return;  // holds its seeded block
            case Op::Linear: {
                const auto& a = nodes_[n.a].val;
                const auto W = weight(n.lin);
                for (int k = 0; k <= C; ++k) n.val.c[k] = a.c[k].matrix() * W.transpose();
                if (n.lin.b_off >= 0)
                    n.val.c[0].rowwise() += bias(n.lin).transpose().array();
                return;
            }
            case Op::Add: {
                const auto& a = nodes_[n.a].val;
                const auto& b = nodes_[n.b].val;
                for (int k = 0; k <= C; ++k) n.val.c[k] = a.c[k] + b.c[k];
                return;
            }
            case Op::Sub: {
                const auto& a = nodes_[n.a].val;
                const auto& b = nodes_[n.b].val;
                for (int k = 0; k <= C; ++k) n.val.c[k] = a.c[k] - b.c[k];
                return;
            }
            case Op::Mul: {
                const auto& a = nodes_[n.a].val;
                const auto& b = nodes_[n.b].val;
                for (int k = C; k >= 0; --k) {
                    Arr acc = a.c[0] * b.c[k];
                    for (int j = 1; j <= k; ++j) acc += a.c[j] * b.c[k - j];
                    n.val.c[k] = std::move(acc);
                }
                return;
            }
            case Op::Scale: {
                const auto& a = nodes_[n.a].val;
                for (int k = 0; k <= C; ++k) n.val.c[k] = n.s0 * a.c[k];
                return;
            }
            case Op::AddScalar: {
                const auto& a = nodes_[n.a].val;
                for (int k = 0; k <= C; ++k) n.val.c[k] = a.c[k];
                n.val.c[0] += n.s0;
                return;
            }
            case Op::Tanh: {
                const auto& a = nodes_[n.a].val;
                n.aux.resize(C, batch_, width_of(n));
                n.val.c[0] = a.c[0].tanh();
                n.aux.c[0] = 1.0 - n.val.c[0].square();
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[1] * n.aux.c[k - 1];
                    for (int j = 2; j <= k; ++j)
                        acc += static_cast<double>(j) * a.c[j] * n.aux.c[k - j];
                    n.val.c[k] = acc / k;
                    Arr sq = n.val.c[0] * n.val.c[k];
                    for (int j = 1; j <= k; ++j) sq += n.val.c[j] * n.val.c[k - j];
                    n.aux.c[k] = -sq;
                }
                return;
            }
            case Op::Sigmoid: {
                const auto& a = nodes_[n.a].val;
                n.aux.resize(C, batch_, width_of(n));
                n.val.c[0] = 1.0 / (1.0 + (-a.c[0]).exp());
                n.aux.c[0] = n.val.c[0] * (1.0 - n.val.c[0]);
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[1] * n.aux.c[k - 1];
                    for (int j = 2; j <= k; ++j)
                        acc += static_cast<double>(j) * a.c[j] * n.aux.c[k - j];
                    n.val.c[k] = acc / k;
                    Arr sq = 2.0 * (n.val.c[0] * n.val.c[k]);
                    for (int j = 1; j < k; ++j) sq += n.val.c[j] * n.val.c[k - j];
                    n.aux.c[k] = n.val.c[k] - sq;
                }
                return;
            }
            case Op::Exp: {
                const auto& a = nodes_[n.a].val;
                n.val.c[0] = a.c[0].exp();
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[1] * n.val.c[k - 1];
                    for (int j = 2; j <= k; ++j)
                        acc += static_cast<double>(j) * a.c[j] * n.val.c[k - j];
                    n.val.c[k] = acc / k;
                }
                return;
            }
            case Op::LogSigmoid: {
                const auto& a = nodes_[n.a].val;
                n.aux.resize(C, batch_, width_of(n));
                // aux holds the series of sigmoid(-x), the log-sigmoid derivative,
                // via the logistic recurrence on the negated input.
                n.aux.c[0] = 1.0 / (1.0 + a.c[0].exp());
                if (C >= 1) {
                    std::vector<Arr> w(static_cast<std::size_t>(C) + 1);
                    w[0] = n.aux.c[0] * (1.0 - n.aux.c[0]);
                    for (int k = 1; k <= C; ++k) {
                        Arr acc = (-a.c[1]) * w[k - 1];
                        for (int j = 2; j <= k; ++j)
                            acc += static_cast<double>(j) * (-a.c[j]) * w[k - j];
                        n.aux.c[k] = acc / k;
                        Arr sq = 2.0 * (n.aux.c[0] * n.aux.c[k]);
                        for (int j = 1; j < k; ++j) sq += n.aux.c[j] * n.aux.c[k - j];
                        w[k] = n.aux.c[k] - sq;
                    }
                }
                n.val.c[0] = (a.c[0] >= 0.0)
                                 .select(-(-a.c[0]).exp().log1p(), a.c[0] - a.c[0].exp().log1p());
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[1] * n.aux.c[k - 1];
                    for (int j = 2; j <= k; ++j)
                        acc += static_cast<double>(j) * a.c[j] * n.aux.c[k - j];
                    n.val.c[k] = acc / k;
                }
                return;
            }
            case Op::Recip: {
                const auto& a = nodes_[n.a].val;
                if (a.c[0].abs().minCoeff() < kDivGuard)
                    throw DomainError("tape reciprocal of value below machine guard");
                n.aux.resize(C, batch_, width_of(n));
                n.val.c[0] = 1.0 / a.c[0];
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[1] * n.val.c[k - 1];
                    for (int j = 2; j <= k; ++j) acc += a.c[j] * n.val.c[k - j];
                    n.val.c[k] = -n.val.c[0] * acc;
                }
                // Derivative series: -(y*y).
                for (int k = 0; k <= C; ++k) {
                    Arr sq = n.val.c[0] * n.val.c[k];
                    for (int j = 1; j <= k; ++j) sq += n.val.c[j] * n.val.c[k - j];
                    n.aux.c[k] = -sq;
                }
                return;
            }
            case Op::Sqrt: {
                const auto& a = nodes_[n.a].val;
                if (a.c[0].minCoeff() <= 0.0) throw DomainError("tape sqrt of non-positive value");
                n.aux.resize(C, batch_, width_of(n));
                n.val.c[0] = a.c[0].sqrt();
                const Arr inv2y0 = 0.5 / n.val.c[0];
                for (int k = 1; k <= C; ++k) {
                    Arr acc = a.c[k];
                    for (int j = 1; j < k; ++j) acc -= n.val.c[j] * n.val.c[k - j];
                    n.val.c[k] = inv2y0 * acc;
                }
                // Derivative series: 1/(2 y), reciprocal recurrence on 2y.
                n.aux.c[0] = inv2y0;
                for (int k = 1; k <= C; ++k) {
                    Arr acc = 2.0 * n.val.c[1] * n.aux.c[k - 1];
                    for (int j = 2; j <= k; ++j) acc += 2.0 * n.val.c[j] * n.aux.c[k - j];
                    n.aux.c[k] = -n.aux.c[0] * acc;
                }
                return;
            }
            case Op::Max: {
                const auto& a = nodes_[n.a].val;
                const auto& b = nodes_[n.b].val;
                n.aux.resize(0, batch_, width_of(n));
                n.aux.c[0] = (a.c[0] >= b.c[0]).cast<double>();
                for (int k = 0; k <= C; ++k)
                    n.val.c[k] = n.aux.c[0] * a.c[k] + (1.0 - n.aux.c[0]) * b.c[k];
                return;
            }
            case Op::Clip: {
                const auto& a = nodes_[n.a].val;
                n.aux.resize(0, batch_, width_of(n));
                n.aux.c[0] = (a.c[0] >= n.s0 && a.c[0] <= n.s1).cast<double>();
                n.val.c[0] = a.c[0].max(n.s0).min(n.s1);
                for (int k = 1; k <= C; ++k) n.val.c[k] = n.aux.c[0] * a.c[k];
                return;
            }
            case Op::Slice: {
                const auto& a = nodes_[n.a].val;
                for (int k = 0; k <= C; ++k)
                    n.val.c[k] = a.c[k].middleCols(n.col0, n.val.c[0].cols());
                return;
            }
            case Op::RowMean: {
                const auto& a = nodes_[n.a].val;
                for (int k = 0; k <= C; ++k) n.val.c[k] = a.c[k].rowwise().mean();
                return;
            }
            case Op::Broadcast: {
                const auto& a = nodes_[n.a].val;
                for (int k = 0; k <= C; ++k)
                    n.val.c[k] = a.c[k].replicate(1, n.val.c[0].cols());
                return;
            }
        }
    }

    Eigen::Index width_of(const Node& n) const { return n.val.c[0].cols(); }

    // adj(input)_j += sum_{k>=j} deriv_{k-j} * adj(out)_k, the transpose of the
    // truncated-series chain rule for elementwise-analytic maps.
    void ring_backward(Coeffs& in_adj, const Coeffs& deriv, const Coeffs& out_adj) const {
        for (int j = 0; j <= order_; ++j)
            for (int k = j; k <= order_; ++k) in_adj.c[j] += deriv.c[k - j] * out_adj.c[k];
    }

    void propagate(Node& n) {
        const int C = order_;
        switch (n.op) {
            case Op::Input:
                return;
            case Op::Linear: {
                auto& a = nodes_[n.a];
                const auto W = weight(n.lin);
                Eigen::Map<Eigen::MatrixXd> gW(grad_->data() + n.lin.w_off, n.lin.rows,
                                               n.lin.cols);
                for (int k = 0; k <= C; ++k) {
                    a.adj.c[k] += (n.adj.c[k].matrix() * W).array();
                    gW.noalias() += n.adj.c[k].matrix().transpose() * a.val.c[k].matrix();
                }
                if (n.lin.b_off >= 0) {
                    Eigen::Map<Eigen::VectorXd> gb(grad_->data() + n.lin.b_off, n.lin.rows);
                    gb += n.adj.c[0].colwise().sum().matrix().transpose();
                }
                return;
            }
            case Op::Add: {
                for (int k = 0; k <= C; ++k) {
                    nodes_[n.a].adj.c[k] += n.adj.c[k];
                    nodes_[n.b].adj.c[k] += n.adj.c[k];
                }
                return;
            }
            case Op::Sub: {
                for (int k = 0; k <= C; ++k) {
                    nodes_[n.a].adj.c[k] += n.adj.c[k];
                    nodes_[n.b].adj.c[k] -= n.adj.c[k];
                }
                return;
            }
            case Op::Mul: {
                auto& a = nodes_[n.a];
                auto& b = nodes_[n.b];
                for (int j = 0; j <= C; ++j)
                    for (int k = j; k <= C; ++k) {
                        a.adj.c[j] += b.val.c[k - j] * n.adj.c[k];
                        b.adj.c[j] += a.val.c[k - j] * n.adj.c[k];
                    }
                return;
            }
            case Op::Scale: {
                for (int k = 0; k <= C; ++k) nodes_[n.a].adj.c[k] += n.s0 * n.adj.c[k];
                return;
            }
            case Op::AddScalar: {
                for (int k = 0; k <= C; ++k) nodes_[n.a].adj.c[k] += n.adj.c[k];
                return;
            }
            case Op::Tanh:
            case Op::Sigmoid:
            case Op::LogSigmoid:
            case Op::Recip:
            case Op::Sqrt:
                ring_backward(nodes_[n.a].adj, n.aux, n.adj);
                return;
            case Op::Exp:
                ring_backward(nodes_[n.a].adj, n.val, n.adj);
                return;
            case Op::Max: {
                for (int k = 0; k <= C; ++k) {
                    nodes_[n.a].adj.c[k] += n.aux.c[0] * n.adj.c[k];
                    nodes_[n.b].adj.c[k] += (1.0 - n.aux.c[0]) * n.adj.c[k];
                }
                return;
            }
            case Op::Clip: {
                for (int k = 0; k <= C; ++k) nodes_[n.a].adj.c[k] += n.aux.c[0] * n.adj.c[k];
                return;
            }
            case Op::Slice: {
                for (int k = 0; k <= C; ++k)
                    nodes_[n.a].adj.c[k].middleCols(n.col0, n.val.c[0].cols()) += n.adj.c[k];
                return;
            }
            case Op::RowMean: {
                const double inv = 1.0 / static_cast<double>(width(n.a));
                for (int k = 0; k <= C; ++k)
                    nodes_[n.a].adj.c[k] += inv * n.adj.c[k].replicate(1, width(n.a));
                return;
            }
            case Op::Broadcast: {
                for (int k = 0; k <= C; ++k)
                    nodes_[n.a].adj.c[k] += n.adj.c[k].rowwise().sum();
                return;
            }
        }
    }

    const Eigen::VectorXd* theta_;
    Eigen::VectorXd* grad_;
    Eigen::Index batch_;
    int order_;
    std::vector<Node> nodes_;
};

}  // namespace pinn
