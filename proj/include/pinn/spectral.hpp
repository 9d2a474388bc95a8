#pragma once

// Frequency-domain analysis: the single-block linearization of the classic
// all-sigmoid cell, the effective map (I+A)^S, kernel eigenvalue lifting
// along plane-wave directions, closed-form modal decay, and the plane-wave
// regression benchmark comparing the gated model against its matched
// baseline.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/model.hpp"
#include "pinn/problems.hpp"
#include "pinn/training.hpp"

namespace pinn {

// Weights of one gated block read as a classic (unnormalized, all-sigmoid)
// cell; the linearization below analyzes this cell, not the stabilized
// update used in training.
struct ClassicCell {
    Eigen::MatrixXd Wi, Wf, Wo, Wz, P;
    Eigen::VectorXd bi, bf, bo, bz;
};

inline ClassicCell cell_slices(const ModelConfig& cfg, const ParamLayout& lay,
                               const Eigen::VectorXd& theta, int block) {
    if (cfg.arch != Arch::XLstm) throw ConfigError("linearization probes a gated block");
    if (cfg.input_gate != GateMode::Sigmoid || cfg.forget_gate != GateMode::Sigmoid)
        throw ConfigError("linearization assumes all-sigmoid gates");
    if (block < 0 || block >= static_cast<int>(lay.blocks.size()))
        throw ConfigError("block index out of range");
    const auto& off = lay.blocks[static_cast<std::size_t>(block)];
    const Eigen::Index W = cfg.width;
    ClassicCell c;
    const auto mat = [&](Eigen::Index o, Eigen::Index row0) {
        return Eigen::Map<const Eigen::MatrixXd>(theta.data() + o, 4 * W, W)
            .middleRows(row0, W)
            .eval();
    };
    c.Wi = mat(off.Wg, 0);
    c.Wf = mat(off.Wg, W);
    c.Wo = mat(off.Wg, 2 * W);
    c.Wz = mat(off.Wg, 3 * W);
    c.bi = theta.segment(off.bg, W);
    c.bf = theta.segment(off.bg + W, W);
    c.bo = theta.segment(off.bg + 2 * W, W);
    c.bz = theta.segment(off.bg + 3 * W, W);
    c.P = Eigen::Map<const Eigen::MatrixXd>(theta.data() + off.P, W, W);
    return c;
}

// One-step displacement of the classic cell from rest: tanh(P h1(u)).
inline Eigen::VectorXd classic_displacement(const ClassicCell& c, const Eigen::VectorXd& u) {
    const Eigen::ArrayXd i = 1.0 / (1.0 + (-(c.Wi * u + c.bi)).array().exp());
    const Eigen::ArrayXd o = 1.0 / (1.0 + (-(c.Wo * u + c.bo)).array().exp());
    const Eigen::ArrayXd z = (c.Wz * u + c.bz).array().tanh();
    const Eigen::ArrayXd c1 = i * z;
    const Eigen::VectorXd h1 = (o * c1.tanh()).matrix();
    return (c.P * h1).array().tanh().matrix();
}

// Jacobian of the displacement with respect to u at rest state (h, c) = (0, 0).
inline Eigen::MatrixXd compute_A(const ClassicCell& c, const Eigen::VectorXd& u) {
    const Eigen::ArrayXd gi = (c.Wi * u + c.bi).array();
    const Eigen::ArrayXd go = (c.Wo * u + c.bo).array();
    const Eigen::ArrayXd gz = (c.Wz * u + c.bz).array();

    const Eigen::ArrayXd i = 1.0 / (1.0 + (-gi).exp());
    const Eigen::ArrayXd o = 1.0 / (1.0 + (-go).exp());
    const Eigen::ArrayXd z = gz.tanh();
    const Eigen::ArrayXd c1 = i * z;
    const Eigen::ArrayXd tc1 = c1.tanh();

    const Eigen::ArrayXd d_o = o * (1.0 - o) * tc1;
    const Eigen::ArrayXd d_c = o * (1.0 - tc1.square());
    const Eigen::ArrayXd d_i = i * (1.0 - i);
    const Eigen::ArrayXd d_z = 1.0 - z.square();

    const Eigen::MatrixXd Juh = d_o.matrix().asDiagonal() * c.Wo +
                                d_c.matrix().asDiagonal() *
                                    ((d_i * z).matrix().asDiagonal() * c.Wi +
                                     (d_z * i).matrix().asDiagonal() * c.Wz);
    const Eigen::ArrayXd jpsi = 1.0 - (c.P * (o * tc1).matrix()).array().tanh().square();
    return jpsi.matrix().asDiagonal() * c.P * Juh;
}

struct EffectiveMap {
    Eigen::MatrixXd M;  // (I + A)^S
    double smin = 0.0, smax = 0.0;
};

inline EffectiveMap effective_map(const Eigen::MatrixXd& A, int S) {
    if (S < 1) throw ConfigError("micro-step count must be >= 1");
    if (A.rows() != A.cols()) throw StructuralError("square matrix expected");
    const Eigen::MatrixXd base =
        Eigen::MatrixXd::Identity(A.rows(), A.cols()) + A;
    EffectiveMap out;
    out.M = base;
    for (int s = 1; s < S; ++s) out.M = out.M * base;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.M);
    out.smin = svd.singularValues().minCoeff();
    out.smax = svd.singularValues().maxCoeff();
    return out;
}

struct KernelRow {
    double k = 0.0;
    double lambda_base = 0.0;
    double lambda_x = 0.0;
    double alpha = 0.0;  // 2 rho_B(v_k)
    double ratio = 0.0;  // lambda_x / lambda_base
    bool degenerate = false;
};

// Eigenvalue pair along each plane-wave direction: v_k from the feature
// matrix, base value ||v_k||^2, lifted value through ((I+A)^S)^T.
inline std::vector<KernelRow> kernel_pair(const Arr& phi, const Arr& points,
                                          const Eigen::MatrixXd& A, int S,
                                          const std::vector<double>& ks, double phase) {
    if (phi.rows() != points.rows()) throw StructuralError("feature/point row mismatch");
    if (A.rows() != phi.cols()) throw StructuralError("feature width does not match A");
    const EffectiveMap em = effective_map(A, S);
    const Eigen::MatrixXd B = 0.5 * (A + A.transpose());
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(points.rows()));

    std::vector<KernelRow> rows;
    for (double k : ks) {
        Eigen::VectorXd kv(points.cols());
        kv.setZero();
        kv[0] = k;
        const PlaneWave wave = plane_wave_target(kv, phase);
        Eigen::VectorXd phik(points.rows());
        for (Eigen::Index r = 0; r < points.rows(); ++r) {
            std::vector<double> p(points.row(r).begin(), points.row(r).end());
            phik[r] = wave(std::span<const double>(p)) * inv_sqrt_n;
        }
        KernelRow row;
        row.k = k;
        const Eigen::VectorXd v = phi.matrix().transpose() * phik;
        row.lambda_base = v.squaredNorm();
        if (std::sqrt(row.lambda_base) < 1e-12) {
            row.degenerate = true;
            rows.push_back(row);
            continue;
        }
        row.lambda_x = (em.M.transpose() * v).squaredNorm();
        row.alpha = 2.0 * v.dot(B * v) / v.squaredNorm();
        row.ratio = row.lambda_x / row.lambda_base;
        rows.push_back(row);
    }
    return rows;
}

// Closed-form modal decay e(t) = e0 exp(-eta lambda t) and its reducers.

inline double modal_error(double e0, double eta, double lambda, double t) {
    if (!(eta > 0.0)) throw DomainError("learning rate must be positive");
    if (lambda < 0.0) throw DomainError("eigenvalue must be non-negative");
    return e0 * std::exp(-eta * lambda * t);
}

// Iterations until e(t) <= eps; +inf when the mode never decays (censored).
inline double time_to_threshold(double e0, double eps, double eta, double lambda) {
    if (!(eta > 0.0)) throw DomainError("learning rate must be positive");
    if (lambda < 0.0) throw DomainError("eigenvalue must be non-negative");
    if (!(e0 > 0.0) || !(eps > 0.0)) throw DomainError("errors must be positive");
    if (e0 <= eps) return 0.0;
    if (lambda == 0.0) return std::numeric_limits<double>::infinity();
    return std::log(e0 / eps) / (eta * lambda);
}

inline double endpoint_ratio(double lambda_base, double lambda_x, double eta, double t) {
    return std::exp(eta * (lambda_x - lambda_base) * t);
}

// Largest |k| whose cumulative squared error stays within eps^2; 0 when even
// the lowest mode overflows the budget.
inline double resolvable_bandwidth(std::vector<std::pair<double, double>> k_and_err,
                                   double eps) {
    if (!(eps > 0.0)) throw DomainError("threshold must be positive");
    std::sort(k_and_err.begin(), k_and_err.end(),
              [](const auto& a, const auto& b) { return std::abs(a.first) < std::abs(b.first); });
    double cum = 0.0, kstar = 0.0;
    for (const auto& [k, e] : k_and_err) {
        cum += e * e;
        if (cum <= eps * eps) kstar = std::abs(k);
    }
    return kstar;
}

// Feature matrix of one layer over a point set (layer 0 = post-embedding).
inline Arr layer_features(const ModelConfig& cfg, const ParamLayout& lay,
                          const Eigen::VectorXd& theta, const Arr& points, int layer) {
    Tape tape(&theta, nullptr, points.rows(), 0);
    std::vector<int> nodes;
    build_forward(tape, cfg, lay, tape.input(points), &nodes);
    if (layer < 0 || layer >= static_cast<int>(nodes.size()))
        throw ConfigError("feature layer out of range");
    return tape.value(nodes[static_cast<std::size_t>(layer)]).c[0];
}

// Pure plane-wave regression of one model; dense-grid relative error tracked
// every iteration for the time-to-threshold reducer.
struct RegressOutcome {
    Eigen::VectorXd theta;
    std::vector<double> err_history;
    double endpoint = std::numeric_limits<double>::quiet_NaN();
    int tau = 0;
    bool censored = true;
    bool aborted = false;
};

inline RegressOutcome regress(const ModelConfig& cfg, const Eigen::VectorXd& theta0,
                              const Arr& train_x, const Eigen::ArrayXd& train_y,
                              const Arr& dense_x, const Eigen::ArrayXd& dense_y,
                              const AdamConfig& adam, int budget, double eps) {
    const ParamLayout lay = ParamLayout::build(cfg);
    if (theta0.size() != lay.total) throw ConfigError("theta0 length mismatch");
    const double dnorm = std::sqrt(dense_y.square().mean());
    if (dnorm < 1e-15) throw ConfigError("degenerate regression target");

    Eigen::VectorXd theta = theta0, grad(lay.total);
    Tape tape(&theta, &grad, train_x.rows(), 0);
    const int out = build_forward(tape, cfg, lay, tape.input(train_x));
    Tape probe(&theta, nullptr, dense_x.rows(), 0);
    const int pout = build_forward(probe, cfg, lay, probe.input(dense_x));

    Adam opt(lay.total, adam);
    Eigen::VectorXd last_good = theta;
    RegressOutcome rec;
    const double n = static_cast<double>(train_x.rows());

    for (int it = 0; it < budget; ++it) {
        tape.forward();
        const Eigen::ArrayXd resid = tape.value(out).c[0].col(0) - train_y;
        if (!std::isfinite(resid.square().mean())) {
            rec.aborted = true;
            theta = last_good;
            break;
        }
        last_good = theta;
        grad.setZero();
        tape.zero_adjoints();
        tape.adjoint(out).c[0].col(0) = (2.0 / n) * resid;
        tape.backward();
        try {
            opt.step(theta, grad);
        } catch (const ModelFault&) {
            rec.aborted = true;
            theta = last_good;
            break;
        }

        probe.forward();
        const double err =
            std::sqrt((probe.value(pout).c[0].col(0) - dense_y).square().mean()) / dnorm;
        if (!std::isfinite(err)) {
            rec.aborted = true;
            theta = last_good;
            break;
        }
        rec.err_history.push_back(err);
        if (rec.censored && err <= eps) {
            rec.tau = it + 1;
            rec.censored = false;
        }
    }
    if (!rec.aborted && !rec.err_history.empty()) {
        rec.endpoint = rec.err_history.back();
        if (rec.censored) rec.tau = budget;
    }
    rec.theta = theta;
    return rec;
}

struct ProbeConfig {
    ModelConfig model;  // gated reference; baseline is width-matched automatically
    AdamConfig adam;
    int budget = 1500;
    int train_points = 256;
    int dense_points = 2048;
    int k_min = 1, k_max = 24;
    int seeds = 5;
    std::uint64_t seed0 = 1;
    double eps = 0.1;  // relative L2 threshold for tau and k*
    double phase = 0.0;
    int feature_points = 512;
    int feature_layer = 0;
    int probe_block = 0;
};

struct FrequencySample {
    int k = 0;
    int seed_index = 0;
    double err_x = 0.0, err_base = 0.0;
    double gain = 0.0;  // err_base / err_x
    int tau_x = 0, tau_base = 0;
    bool censored_x = true, censored_base = true;
    bool dropped = false;
};

struct FrequencyBand {
    int k = 0;
    int used = 0;
    double mean_err_x = 0.0, sd_err_x = 0.0;
    double mean_err_base = 0.0, sd_err_base = 0.0;
    double mean_gain = 0.0, sd_gain = 0.0;
    double mean_tau_x = 0.0, mean_tau_base = 0.0;
    int censored_x = 0, censored_base = 0;
};

struct FrequencyReport {
    ModelConfig xlstm, baseline;
    Eigen::Index params_x = 0, params_base = 0;
    int budget = 0, seeds = 0;
    double eps = 0.0;
    std::vector<FrequencySample> samples;
    std::vector<FrequencyBand> bands;
    double kstar_x = 0.0, kstar_base = 0.0;
    int dropped = 0;
};

namespace detail {

inline void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace detail

// Matched-pair plane-wave benchmark over an integer k-grid; a seed is dropped
// for both models if either run goes non-finite.
inline FrequencyReport frequency_benchmark(const ProbeConfig& pc) {
    if (pc.model.input_dim != 1) throw ConfigError("the frequency probe is one-dimensional");
    if (pc.k_min > pc.k_max) throw ConfigError("empty k-grid");
    if (pc.seeds < 1) throw ConfigError("at least one seed required");
    if (!(pc.eps > 0.0)) throw ConfigError("threshold must be positive");

    ModelConfig xc = pc.model;
    xc.arch = Arch::XLstm;
    xc.validate();
    const ModelConfig bc = matched_baseline(xc);

    FrequencyReport rep;
    rep.xlstm = xc;
    rep.baseline = bc;
    rep.params_x = param_count(xc);
    rep.params_base = param_count(bc);
    rep.budget = pc.budget;
    rep.seeds = pc.seeds;
    rep.eps = pc.eps;
    const double rel = std::abs(static_cast<double>(rep.params_x) -
                                static_cast<double>(rep.params_base)) /
                       static_cast<double>(rep.params_x);
    if (rel > 0.02) throw ConfigError("no baseline width matches the parameter count within 2%");

    Arr dense(pc.dense_points, 1);
    for (int i = 0; i < pc.dense_points; ++i)
        dense(i, 0) = -1.0 + 2.0 * (i + 0.5) / pc.dense_points;

    std::vector<std::pair<double, double>> perr_x, perr_base;
    for (int k = pc.k_min; k <= pc.k_max; ++k) {
        Eigen::VectorXd kv(1);
        kv << static_cast<double>(k);
        const PlaneWave wave = plane_wave_target(kv, pc.phase);
        Eigen::ArrayXd dense_y(pc.dense_points);
        for (int i = 0; i < pc.dense_points; ++i) {
            const std::array<double, 1> p{dense(i, 0)};
            dense_y[i] = wave(std::span<const double>(p));
        }

        std::vector<double> ex, eb, gs, tx, tb;
        FrequencyBand band;
        band.k = k;
        for (int s = 0; s < pc.seeds; ++s) {
            const std::string tag = "probe/k" + std::to_string(k) + "/s" + std::to_string(s);
            Rng prng(derive_seed(pc.seed0, tag + "/points"));
            Arr train_x(pc.train_points, 1);
            for (int i = 0; i < pc.train_points; ++i) train_x(i, 0) = prng.uniform(-1.0, 1.0);
            Eigen::ArrayXd train_y(pc.train_points);
            for (int i = 0; i < pc.train_points; ++i) {
                const std::array<double, 1> p{train_x(i, 0)};
                train_y[i] = wave(std::span<const double>(p));
            }

            const auto rx = regress(xc, init_params(xc, derive_seed(pc.seed0, tag + "/x")),
                                    train_x, train_y, dense, dense_y, pc.adam, pc.budget, pc.eps);
            const auto rb = regress(bc, init_params(bc, derive_seed(pc.seed0, tag + "/b")),
                                    train_x, train_y, dense, dense_y, pc.adam, pc.budget, pc.eps);

            FrequencySample sm;
            sm.k = k;
            sm.seed_index = s;
            sm.dropped = rx.aborted || rb.aborted;
            if (!sm.dropped) {
                sm.err_x = rx.endpoint;
                sm.err_base = rb.endpoint;
                sm.gain = rb.endpoint / rx.endpoint;
                sm.tau_x = rx.tau;
                sm.tau_base = rb.tau;
                sm.censored_x = rx.censored;
                sm.censored_base = rb.censored;
                ex.push_back(sm.err_x);
                eb.push_back(sm.err_base);
                gs.push_back(sm.gain);
                tx.push_back(static_cast<double>(sm.tau_x));
                tb.push_back(static_cast<double>(sm.tau_base));
                band.censored_x += sm.censored_x ? 1 : 0;
                band.censored_base += sm.censored_base ? 1 : 0;
            } else {
                ++rep.dropped;
            }
            rep.samples.push_back(sm);
        }
        band.used = static_cast<int>(ex.size());
        detail::mean_sd(ex, band.mean_err_x, band.sd_err_x);
        detail::mean_sd(eb, band.mean_err_base, band.sd_err_base);
        detail::mean_sd(gs, band.mean_gain, band.sd_gain);
        double dummy;
        detail::mean_sd(tx, band.mean_tau_x, dummy);
        detail::mean_sd(tb, band.mean_tau_base, dummy);
        rep.bands.push_back(band);
        if (band.used > 0) {
            perr_x.emplace_back(k, band.mean_err_x);
            perr_base.emplace_back(k, band.mean_err_base);
        }
    }

    rep.kstar_x = resolvable_bandwidth(perr_x, pc.eps);
    rep.kstar_base = resolvable_bandwidth(perr_base, pc.eps);
    return rep;
}

}  // namespace pinn
