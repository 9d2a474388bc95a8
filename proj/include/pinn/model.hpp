#pragma once

// Network definitions: a residual gated-memory architecture built from
// micro-steps with stabilized exponential gating, and a width-matched plain
// tanh multilayer baseline. Parameters live in one flat vector described by a
// ParamLayout. Two evaluation paths share the layout: a scalar path generic
// over the arithmetic type (double or truncated-Taylor jets, used for
// reference checks and field evaluation) and a batched tape path (used for
// training gradients). Tests pin the two paths against each other.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/jet.hpp"
#include "pinn/tape.hpp"

namespace pinn {

enum class Arch { Baseline, XLstm };
enum class GateMode { Exp, Sigmoid };

struct ModelConfig {
    Arch arch = Arch::XLstm;
    int input_dim = 2;
    int width = 64;
    int depth = 4;
    int micro_steps = 3;  // compute depth only; parameter count is independent of it
    GateMode input_gate = GateMode::Exp;
    GateMode forget_gate = GateMode::Sigmoid;
    bool layer_norm = false;
    double eps = 1e-8;
    double clip_lo = -30.0;
    double clip_hi = 0.0;

    void validate() const {
        if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
        if (width < 1) throw ConfigError("width must be >= 1");
        if (depth < 0) throw ConfigError("depth must be >= 0");
        if (arch == Arch::XLstm && micro_steps < 1)
            throw ConfigError("micro_steps must be >= 1");
        if (eps <= 0.0) throw ConfigError("eps guard must be positive");
        if (clip_lo > clip_hi) throw ConfigError("clip bounds inverted");
    }
};

struct BlockOffsets {
    Eigen::Index Wg, Ug, bg, P, M1, M2, Wgam, bgam, Wsh, bsh;
};

struct ParamLayout {
    struct Entry {
        std::string name;
        Eigen::Index offset, rows, cols;
        bool bias;
    };

    std::vector<Entry> entries;
    Eigen::Index total = 0;
    Eigen::Index w_in = 0, b_in = 0, w_out = 0, b_out = 0;
    std::vector<BlockOffsets> blocks;                           // gated architecture
    std::vector<std::pair<Eigen::Index, Eigen::Index>> layers;  // baseline (W, b)

    static ParamLayout build(const ModelConfig& cfg) {
        ParamLayout lay;
        auto add = [&lay](std::string name, Eigen::Index r, Eigen::Index c, bool bias) {
            const Eigen::Index off = lay.total;
            lay.entries.push_back({std::move(name), off, r, c, bias});
            lay.total += r * c;
            return off;
        };
        const Eigen::Index W = cfg.width, d = cfg.input_dim;
        lay.w_in = add("W_in", W, d, false);
        lay.b_in = add("b_in", W, 1, true);
        for (int l = 0; l < cfg.depth; ++l) {
            const std::string p = "blk" + std::to_string(l) + ".";
            if (cfg.arch == Arch::XLstm) {
                BlockOffsets b;
                b.Wg = add(p + "Wg", 4 * W, W, false);
                b.Ug = add(p + "Ug", 4 * W, W, false);
                b.bg = add(p + "bg", 4 * W, 1, true);
                b.P = add(p + "P", W, W, false);
                b.M1 = add(p + "M1", W, W, false);
                b.M2 = add(p + "M2", W, W, false);
                b.Wgam = add(p + "Wgam", W, W, false);
                b.bgam = add(p + "bgam", W, 1, true);
                b.Wsh = add(p + "Wsh", W, W, false);
                b.bsh = add(p + "bsh", W, 1, true);
                lay.blocks.push_back(b);
            } else {
                const Eigen::Index wo = add(p + "W", W, W, false);
                const Eigen::Index bo = add(p + "b", W, 1, true);
                lay.layers.emplace_back(wo, bo);
            }
        }
        lay.w_out = add("W_out", 1, W, false);
        lay.b_out = add("b_out", 1, 1, true);
        return lay;
    }

    const Entry* find(std::string_view name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

inline Eigen::Index param_count(const ModelConfig& cfg) { return ParamLayout::build(cfg).total; }

// Uniform +-sqrt(1/fan_in) weights, zero biases, forget-gate bias +1.
inline Eigen::VectorXd init_params(const ModelConfig& cfg, std::uint64_t seed) {
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta(lay.total);
    Rng rng(seed);
    for (const auto& e : lay.entries) {
        if (e.bias) {
            theta.segment(e.offset, e.rows * e.cols).setZero();
        } else {
            const double bound = std::sqrt(1.0 / static_cast<double>(e.cols));
            for (Eigen::Index i = 0; i < e.rows * e.cols; ++i)
                theta[e.offset + i] = rng.uniform(-bound, bound);
        }
    }
    for (const auto& b : lay.blocks)
        theta.segment(b.bg + cfg.width, cfg.width).setOnes();  // forget-gate slice of bg
    return theta;
}

// Closest-parameter-count baseline: same depth, width searched.
inline ModelConfig matched_baseline(const ModelConfig& x) {
    ModelConfig b = x;
    b.arch = Arch::Baseline;
    const Eigen::Index target = param_count(x);
    Eigen::Index best_diff = -1;
    int best_w = 1;
    for (int wb = 1; wb <= 4096; ++wb) {
        b.width = wb;
        const Eigen::Index diff = std::abs(param_count(b) - target);
        if (best_diff < 0 || diff < best_diff) {
            best_diff = diff;
            best_w = wb;
        }
        if (param_count(b) > target && diff > best_diff) break;
    }
    b.width = best_w;
    return b;
}

namespace detail {

// y = W x (+ b), W column-major rows x cols, arithmetic generic over T.
template <typename T>
void affine_into(const double* W, Eigen::Index rows, Eigen::Index cols, const double* b,
                 std::span<const T> x, std::vector<T>& y) {
    y.assign(static_cast<std::size_t>(rows), T(0.0));
    for (Eigen::Index c = 0; c < cols; ++c) {
        const double* col = W + c * rows;
        for (Eigen::Index r = 0; r < rows; ++r) y[r] = y[r] + x[c] * col[r];
    }
    if (b)
        for (Eigen::Index r = 0; r < rows; ++r) y[r] = y[r] + b[r];
}

template <typename T>
void check_finite(const std::vector<T>& v, const char* what) {
    for (const T& e : v)
        if (!std::isfinite(leading(e))) throw ModelFault(std::string("non-finite ") + what);
}

}  // namespace detail

template <typename T>
struct BlockState {
    std::vector<T> h, c, n, m;

    static BlockState zero(int width) {
        BlockState s;
        s.h.assign(width, T(0.0));
        s.c.assign(width, T(0.0));
        s.n.assign(width, T(0.0));
        s.m.assign(width, T(0.0));
        return s;
    }
};

// One stabilized micro-step: gate pre-activations g = Wg u + Ug h + bg split
// into (i, f, o, z); log-domain rescaling m' = max(log f + m, log i) keeps the
// exponentials in [exp(clip_lo), 1]; returns the refined u' = u + tanh(P h').
template <typename T>
std::vector<T> micro_step(const ModelConfig& cfg, const ParamLayout& lay,
                          const Eigen::VectorXd& theta, int block, const std::vector<T>& u,
                          BlockState<T>& st) {
    using std::exp;
    using std::tanh;
    const Eigen::Index W = cfg.width;
    const BlockOffsets& off = lay.blocks[static_cast<std::size_t>(block)];
    const double* th = theta.data();

    std::vector<T> g, gh;
    detail::affine_into(th + off.Wg, 4 * W, W, th + off.bg, std::span<const T>(u), g);
    detail::affine_into(th + off.Ug, 4 * W, W, nullptr, std::span<const T>(st.h), gh);
    for (Eigen::Index i = 0; i < 4 * W; ++i) g[i] = g[i] + gh[i];
    detail::check_finite(g, "gate pre-activation");

    std::vector<T> h2(W, T(0.0));
    for (Eigen::Index i = 0; i < W; ++i) {
        const T& gi = g[i];
        const T& gf = g[W + i];
        const T& go = g[2 * W + i];
        const T& gz = g[3 * W + i];
        const T log_i = (cfg.input_gate == GateMode::Exp) ? gi : log_sigmoid_of(gi);
        const T log_f = (cfg.forget_gate == GateMode::Sigmoid) ? log_sigmoid_of(gf) : gf;
        const T o = sigmoid_of(go);
        const T z = tanh(gz);
        const T lfm = log_f + st.m[i];
        const T m2 = jmax(lfm, log_i);
        const T fbar = exp(clip(lfm - m2, cfg.clip_lo, cfg.clip_hi));
        const T ibar = exp(clip(log_i - m2, cfg.clip_lo, cfg.clip_hi));
        const T c2 = fbar * st.c[i] + ibar * z;
        const T n2 = fbar * st.n[i] + ibar;
        st.c[i] = c2;
        st.n[i] = n2;
        st.m[i] = m2;
        h2[i] = o * c2 * recip(n2 + cfg.eps);
    }
    detail::check_finite(st.m, "stabilizer");
    detail::check_finite(st.c, "cell state");
    detail::check_finite(st.n, "normalizer");
    detail::check_finite(h2, "hidden output");
    st.h = h2;

    std::vector<T> ph;
    detail::affine_into(th + off.P, W, W, nullptr, std::span<const T>(h2), ph);
    detail::check_finite(ph, "residual projection");
    std::vector<T> u2(u);
    for (Eigen::Index i = 0; i < W; ++i) u2[i] = u2[i] + tanh(ph[i]);
    detail::check_finite(u2, "residual refinement");
    return u2;
}

// Mixer, optional layer normalization, then the shaping map.
template <typename T>
std::vector<T> block_tail(const ModelConfig& cfg, const ParamLayout& lay,
                          const Eigen::VectorXd& theta, int block, const std::vector<T>& uS) {
    using std::sqrt;
    using std::tanh;
    const Eigen::Index W = cfg.width;
    const BlockOffsets& off = lay.blocks[static_cast<std::size_t>(block)];
    const double* th = theta.data();

    std::vector<T> t1, t2, gam;
    detail::affine_into(th + off.M1, W, W, nullptr, std::span<const T>(uS), t1);
    detail::check_finite(t1, "mixer pre-activation");
    for (auto& v : t1) v = tanh(v);
    detail::affine_into(th + off.M2, W, W, nullptr, std::span<const T>(t1), t2);
    detail::check_finite(t2, "mixer pre-activation");
    detail::affine_into(th + off.Wgam, W, W, th + off.bgam, std::span<const T>(uS), gam);
    detail::check_finite(gam, "mixer gate pre-activation");
    std::vector<T> uplus(uS);
    for (Eigen::Index i = 0; i < W; ++i)
        uplus[i] = uplus[i] + sigmoid_of(gam[i]) * tanh(t2[i]);
    detail::check_finite(uplus, "mixer output");

    if (cfg.layer_norm) {
        T mean(0.0);
        for (const T& v : uplus) mean = mean + v;
        mean = mean * (1.0 / static_cast<double>(W));
        std::vector<T> cent(uplus);
        for (auto& v : cent) v = v - mean;
        T var(0.0);
        for (const T& v : cent) var = var + v * v;
        var = var * (1.0 / static_cast<double>(W));
        const T inv = recip(sqrt(var + cfg.eps));
        for (Eigen::Index i = 0; i < W; ++i) uplus[i] = cent[i] * inv;
    }

    std::vector<T> shaped;
    detail::affine_into(th + off.Wsh, W, W, th + off.bsh, std::span<const T>(uplus), shaped);
    detail::check_finite(shaped, "shaping pre-activation");
    for (auto& v : shaped) v = tanh(v);
    return shaped;
}

template <typename T>
std::vector<T> block_forward(const ModelConfig& cfg, const ParamLayout& lay,
                             const Eigen::VectorXd& theta, int block, const std::vector<T>& u) {
    std::vector<T> uS(u);
    BlockState<T> st = BlockState<T>::zero(cfg.width);
    for (int s = 0; s < cfg.micro_steps; ++s) uS = micro_step(cfg, lay, theta, block, uS, st);
    return block_tail(cfg, lay, theta, block, uS);
}

// Full field evaluation at one point; T is double or a jet type.
template <typename T>
T forward_scalar(const ModelConfig& cfg, const ParamLayout& lay, const Eigen::VectorXd& theta,
                 std::span<const T> x) {
    using std::tanh;
    if (static_cast<Eigen::Index>(x.size()) != cfg.input_dim)
        throw StructuralError("coordinate dimension mismatch");
    const Eigen::Index W = cfg.width;
    const double* th = theta.data();

    std::vector<T> u;
    detail::affine_into(th + lay.w_in, W, cfg.input_dim, th + lay.b_in, x, u);
    detail::check_finite(u, "input embedding");
    for (auto& v : u) v = tanh(v);

    for (int l = 0; l < cfg.depth; ++l) {
        if (cfg.arch == Arch::XLstm) {
            u = block_forward(cfg, lay, theta, l, u);
        } else {
            std::vector<T> next;
            detail::affine_into(th + lay.layers[l].first, W, W, th + lay.layers[l].second,
                                std::span<const T>(u), next);
            detail::check_finite(next, "hidden layer");
            for (auto& v : next) v = tanh(v);
            u = std::move(next);
        }
    }

    std::vector<T> out;
    detail::affine_into(th + lay.w_out, 1, W, th + lay.b_out, std::span<const T>(u), out);
    detail::check_finite(out, "head output");
    return out[0];
}

// Records the identical architecture on a batched tape; returns the head node.
// layer_nodes, when given, collects the representation after the embedding
// and after each block (or hidden layer).
inline int build_forward(Tape& tape, const ModelConfig& cfg, const ParamLayout& lay, int x_node,
                         std::vector<int>* layer_nodes = nullptr) {
    const Eigen::Index W = cfg.width;
    int u = tape.tanh(tape.linear(x_node, LinearSpec{lay.w_in, W, cfg.input_dim, lay.b_in}));
    if (layer_nodes) layer_nodes->push_back(u);

    for (int l = 0; l < cfg.depth; ++l) {
        if (cfg.arch != Arch::XLstm) {
            u = tape.tanh(
                tape.linear(u, LinearSpec{lay.layers[l].first, W, W, lay.layers[l].second}));
            if (layer_nodes) layer_nodes->push_back(u);
            continue;
        }
        const BlockOffsets& off = lay.blocks[static_cast<std::size_t>(l)];
        const int zero = tape.input(Arr::Zero(tape.batch(), W));
        int h = zero, c = zero, n = zero, m = zero;
        for (int s = 0; s < cfg.micro_steps; ++s) {
            const int g = tape.add(tape.linear(u, LinearSpec{off.Wg, 4 * W, W, off.bg}),
                                   tape.linear(h, LinearSpec{off.Ug, 4 * W, W, -1}));
            const int gi = tape.slice(g, 0, W);
            const int gf = tape.slice(g, W, W);
            const int go = tape.slice(g, 2 * W, W);
            const int gz = tape.slice(g, 3 * W, W);
            const int log_i = (cfg.input_gate == GateMode::Exp) ? gi : tape.log_sigmoid(gi);
            const int log_f = (cfg.forget_gate == GateMode::Sigmoid) ? tape.log_sigmoid(gf) : gf;
            const int o = tape.sigmoid(go);
            const int z = tape.tanh(gz);
            const int lfm = tape.add(log_f, m);
            const int m2 = tape.max(lfm, log_i);
            const int fbar = tape.exp(tape.clip(tape.sub(lfm, m2), cfg.clip_lo, cfg.clip_hi));
            const int ibar = tape.exp(tape.clip(tape.sub(log_i, m2), cfg.clip_lo, cfg.clip_hi));
            const int c2 = tape.add(tape.mul(fbar, c), tape.mul(ibar, z));
            const int n2 = tape.add(tape.mul(fbar, n), ibar);
            const int h2 = tape.mul(o, tape.mul(c2, tape.recip(tape.add_scalar(n2, cfg.eps))));
            u = tape.add(u, tape.tanh(tape.linear(h2, LinearSpec{off.P, W, W, -1})));
            h = h2;
            c = c2;
            n = n2;
            m = m2;
        }
        const int t1 = tape.tanh(tape.linear(u, LinearSpec{off.M1, W, W, -1}));
        const int t2 = tape.tanh(tape.linear(t1, LinearSpec{off.M2, W, W, -1}));
        const int gam = tape.sigmoid(tape.linear(u, LinearSpec{off.Wgam, W, W, off.bgam}));
        int uplus = tape.add(u, tape.mul(gam, t2));
        if (cfg.layer_norm) {
            const int cent = tape.sub(uplus, tape.broadcast(tape.row_mean(uplus), W));
            const int var = tape.row_mean(tape.mul(cent, cent));
            const int inv = tape.recip(tape.sqrt(tape.add_scalar(var, cfg.eps)));
            uplus = tape.mul(cent, tape.broadcast(inv, W));
        }
        u = tape.tanh(tape.linear(uplus, LinearSpec{off.Wsh, W, W, off.bsh}));
        if (layer_nodes) layer_nodes->push_back(u);
    }

    return tape.linear(u, LinearSpec{lay.w_out, 1, W, lay.b_out});
}

// Plain batched field values (no derivative tracking, no gradient).
inline Eigen::ArrayXd forward_batch(const ModelConfig& cfg, const ParamLayout& lay,
                                    const Eigen::VectorXd& theta, const Arr& points) {
    Tape tape(&theta, nullptr, points.rows(), 0);
    const int out = build_forward(tape, cfg, lay, tape.input(points));
    return tape.value(out).c[0].col(0);
}

}  // namespace pinn
