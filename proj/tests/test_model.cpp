#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/jet.hpp"
#include "pinn/model.hpp"
#include "pinn/tape.hpp"

using pinn::Arch;
using pinn::BlockState;
using pinn::GateMode;
using pinn::ModelConfig;
using pinn::ParamLayout;

namespace {

ModelConfig small_xlstm(int w = 8, int l = 2, int s = 2) {
    ModelConfig cfg;
    cfg.arch = Arch::XLstm;
    cfg.input_dim = 2;
    cfg.width = w;
    cfg.depth = l;
    cfg.micro_steps = s;
    return cfg;
}

std::vector<double> random_point(pinn::Rng& rng, int d, double lo = -1.0, double hi = 1.0) {
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform(lo, hi);
    return x;
}

// Unstabilized gating oracle: plain exponential/sigmoid gates, no rescaling.
struct NaiveState {
    Eigen::VectorXd h, c, n;
};

Eigen::VectorXd naive_micro_step(const ModelConfig& cfg, const ParamLayout& lay,
                                 const Eigen::VectorXd& theta, int block,
                                 const Eigen::VectorXd& u, NaiveState& st,
                                 double* max_preact = nullptr) {
    const Eigen::Index W = cfg.width;
    const auto& off = lay.blocks[static_cast<std::size_t>(block)];
    Eigen::Map<const Eigen::MatrixXd> Wg(theta.data() + off.Wg, 4 * W, W);
    Eigen::Map<const Eigen::MatrixXd> Ug(theta.data() + off.Ug, 4 * W, W);
    Eigen::Map<const Eigen::VectorXd> bg(theta.data() + off.bg, 4 * W);
    Eigen::Map<const Eigen::MatrixXd> P(theta.data() + off.P, W, W);

    const Eigen::VectorXd g = Wg * u + Ug * st.h + bg;
    if (max_preact) *max_preact = std::max(*max_preact, g.cwiseAbs().maxCoeff());
    const Eigen::ArrayXd gi = g.segment(0, W).array();
    const Eigen::ArrayXd gf = g.segment(W, W).array();
    const Eigen::ArrayXd go = g.segment(2 * W, W).array();
    const Eigen::ArrayXd gz = g.segment(3 * W, W).array();

    Eigen::ArrayXd i, f;
    if (cfg.input_gate == GateMode::Exp)
        i = gi.exp();
    else
        i = 1.0 / (1.0 + (-gi).exp());
    if (cfg.forget_gate == GateMode::Sigmoid)
        f = 1.0 / (1.0 + (-gf).exp());
    else
        f = gf.exp();
    const Eigen::ArrayXd o = 1.0 / (1.0 + (-go).exp());
    const Eigen::ArrayXd z = gz.tanh();

    st.c = (f * st.c.array() + i * z).matrix();
    st.n = (f * st.n.array() + i).matrix();
    st.h = (o * st.c.array() / (st.n.array() + cfg.eps)).matrix();
    return u + (P * st.h).array().tanh().matrix();
}

}  // namespace

TEST_CASE("parameter init is seed-deterministic") {
    const ModelConfig cfg = small_xlstm();
    const Eigen::VectorXd a = pinn::init_params(cfg, 42);
    const Eigen::VectorXd b = pinn::init_params(cfg, 42);
    const Eigen::VectorXd c = pinn::init_params(cfg, 43);
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forward at the origin is finite across widths") {
    for (int w : {16, 64, 128}) {
        ModelConfig cfg = small_xlstm(w, 2, 2);
        const ParamLayout lay = ParamLayout::build(cfg);
        const Eigen::VectorXd theta = pinn::init_params(cfg, 7);
        const double x[2] = {0.0, 0.0};
        const double v = pinn::forward_scalar<double>(cfg, lay, theta, x);
        REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("parameter count follows the closed form and ignores micro-steps") {
    ModelConfig cfg = small_xlstm(16, 3, 1);
    const auto count = [](const ModelConfig& c) { return pinn::param_count(c); };
    const Eigen::Index w = cfg.width, d = cfg.input_dim, l = cfg.depth;
    REQUIRE(count(cfg) == d * w + w + l * (13 * w * w + 6 * w) + w + 1);

    Eigen::Index base = count(cfg);
    for (int s : {2, 4}) {
        cfg.micro_steps = s;
        REQUIRE(count(cfg) == base);
    }

    ModelConfig mlp = cfg;
    mlp.arch = Arch::Baseline;
    mlp.width = 57;
    REQUIRE(count(mlp) == d * 57 + 57 + l * (57 * 57 + 57) + 57 + 1);
}

TEST_CASE("matched baseline width lands within two percent of the target count") {
    ModelConfig cfg = small_xlstm(64, 4, 3);
    const ModelConfig mlp = pinn::matched_baseline(cfg);
    const double cx = static_cast<double>(pinn::param_count(cfg));
    const double cb = static_cast<double>(pinn::param_count(mlp));
    REQUIRE(std::abs(cb - cx) / cx <= 0.02);
    REQUIRE(mlp.arch == Arch::Baseline);
}

TEST_CASE("zero parameters give an identity micro-step with unit input gate") {
    ModelConfig cfg = small_xlstm(6, 1, 1);
    cfg.input_gate = GateMode::Exp;
    const ParamLayout lay = ParamLayout::build(cfg);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(lay.total);
    pinn::Rng rng(5);
    const std::vector<double> u = random_point(rng, 6);
    auto st = BlockState<double>::zero(cfg.width);
    const std::vector<double> u2 = pinn::micro_step(cfg, lay, theta, 0, u, st);
    for (int i = 0; i < 6; ++i) {
        REQUIRE(u2[i] == u[i]);
        REQUIRE(st.c[i] == 0.0);
        REQUIRE(st.n[i] == 1.0);
        REQUIRE(st.h[i] == 0.0);
    }
}

TEST_CASE("stabilized trajectory equals the naive recurrence in the benign regime") {
    for (GateMode ig : {GateMode::Exp, GateMode::Sigmoid})
        for (GateMode fg : {GateMode::Sigmoid, GateMode::Exp}) {
            ModelConfig cfg = small_xlstm(8, 1, 4);
            cfg.input_gate = ig;
            cfg.forget_gate = fg;
            cfg.eps = 0.0;  // the guard enters the two paths asymmetrically
            const ParamLayout lay = ParamLayout::build(cfg);
            Eigen::VectorXd theta = pinn::init_params(cfg, 11) * 0.1;
            pinn::Rng rng(13);
            std::vector<double> u = random_point(rng, 8, -0.5, 0.5);
            Eigen::VectorXd un = Eigen::Map<const Eigen::VectorXd>(u.data(), 8);

            auto st = BlockState<double>::zero(8);
            NaiveState ns{Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(8),
                          Eigen::VectorXd::Zero(8)};
            double max_g = 0.0;
            for (int s = 0; s < 4; ++s) {
                u = pinn::micro_step(cfg, lay, theta, 0, u, st);
                un = naive_micro_step(cfg, lay, theta, 0, un, ns, &max_g);
                for (int i = 0; i < 8; ++i) {
                    REQUIRE(std::abs(u[i] - un[i]) < 1e-12);
                    REQUIRE(std::abs(st.h[i] - ns.h[i]) < 1e-12);
                }
            }
            REQUIRE(max_g <= 2.0);  // the comparison premise: benign pre-activations
        }
}

TEST_CASE("stabilization survives forget pre-activations the naive path cannot") {
    ModelConfig cfg = small_xlstm(4, 1, 16);
    cfg.input_gate = GateMode::Exp;
    cfg.forget_gate = GateMode::Exp;
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(lay.total);
    theta.segment(lay.blocks[0].bg + cfg.width, cfg.width).setConstant(60.0);

    std::vector<double> u(4, 0.3);
    Eigen::VectorXd un = Eigen::Map<const Eigen::VectorXd>(u.data(), 4);
    auto st = BlockState<double>::zero(4);
    NaiveState ns{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
    bool naive_blew_up = false;
    for (int s = 0; s < 16; ++s) {
        u = pinn::micro_step(cfg, lay, theta, 0, u, st);
        un = naive_micro_step(cfg, lay, theta, 0, un, ns);
        if (!un.allFinite() || !ns.n.allFinite() || !ns.c.allFinite()) naive_blew_up = true;
    }
    REQUIRE(naive_blew_up);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(std::isfinite(u[i]));
        REQUIRE(std::isfinite(st.h[i]));
        REQUIRE(std::isfinite(st.c[i]));
        REQUIRE(std::isfinite(st.n[i]));
        REQUIRE(std::isfinite(st.m[i]));
    }
}

TEST_CASE("state stays finite over ten thousand random micro-steps") {
    ModelConfig cfg = small_xlstm(8, 1, 1);
    const ParamLayout lay = ParamLayout::build(cfg);
    const Eigen::VectorXd theta = pinn::init_params(cfg, 3);
    pinn::Rng rng(17);
    auto st = BlockState<double>::zero(8);
    for (int step = 0; step < 10000; ++step) {
        const std::vector<double> u = random_point(rng, 8, -10.0, 10.0);
        pinn::micro_step(cfg, lay, theta, 0, u, st);
        // check_finite inside micro_step throws on the first non-finite state
    }
    SUCCEED();
}

TEST_CASE("block forward is the unrolled micro-step composition") {
    const ModelConfig cfg = small_xlstm(8, 1, 3);
    const ParamLayout lay = ParamLayout::build(cfg);
    const Eigen::VectorXd theta = pinn::init_params(cfg, 21);
    pinn::Rng rng(22);
    const std::vector<double> u0 = random_point(rng, 8);

    std::vector<double> u = u0;
    auto st = BlockState<double>::zero(8);
    for (int s = 0; s < 3; ++s) u = pinn::micro_step(cfg, lay, theta, 0, u, st);
    const std::vector<double> manual = pinn::block_tail(cfg, lay, theta, 0, u);
    const std::vector<double> direct = pinn::block_forward(cfg, lay, theta, 0, u0);
    for (int i = 0; i < 8; ++i) REQUIRE(direct[i] == manual[i]);
}

TEST_CASE("zero mixer weights reduce the block tail to the shaping map") {
    const ModelConfig cfg = small_xlstm(8, 1, 1);
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta = pinn::init_params(cfg, 29);
    const auto* m1 = lay.find("blk0.M1");
    const auto* m2 = lay.find("blk0.M2");
    theta.segment(m1->offset, m1->rows * m1->cols).setZero();
    theta.segment(m2->offset, m2->rows * m2->cols).setZero();

    pinn::Rng rng(30);
    const std::vector<double> u = random_point(rng, 8);
    const std::vector<double> got = pinn::block_tail(cfg, lay, theta, 0, u);

    Eigen::Map<const Eigen::MatrixXd> Wsh(theta.data() + lay.blocks[0].Wsh, 8, 8);
    Eigen::Map<const Eigen::VectorXd> bsh(theta.data() + lay.blocks[0].bsh, 8);
    const Eigen::VectorXd want =
        ((Wsh * Eigen::Map<const Eigen::VectorXd>(u.data(), 8) + bsh).array().tanh()).matrix();
    for (int i = 0; i < 8; ++i) REQUIRE(got[i] == want[i]);
}

TEST_CASE("zero micro-steps pass the block input straight to the tail") {
    ModelConfig cfg = small_xlstm(8, 1, 0);
    const ParamLayout lay = ParamLayout::build(cfg);
    const Eigen::VectorXd theta = pinn::init_params(cfg, 33);
    pinn::Rng rng(34);
    const std::vector<double> u = random_point(rng, 8);
    const std::vector<double> a = pinn::block_forward(cfg, lay, theta, 0, u);
    const std::vector<double> b = pinn::block_tail(cfg, lay, theta, 0, u);
    for (int i = 0; i < 8; ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("depth zero reduces to embed plus head") {
    ModelConfig cfg = small_xlstm(8, 0, 1);
    const ParamLayout lay = ParamLayout::build(cfg);
    const Eigen::VectorXd theta = pinn::init_params(cfg, 41);
    pinn::Rng rng(42);
    const std::vector<double> x = random_point(rng, 2);
    const double got = pinn::forward_scalar<double>(cfg, lay, theta, x);

    Eigen::Map<const Eigen::MatrixXd> Win(theta.data() + lay.w_in, 8, 2);
    Eigen::Map<const Eigen::VectorXd> bin(theta.data() + lay.b_in, 8);
    Eigen::Map<const Eigen::MatrixXd> Wout(theta.data() + lay.w_out, 1, 8);
    const Eigen::VectorXd u =
        ((Win * Eigen::Map<const Eigen::VectorXd>(x.data(), 2) + bin).array().tanh()).matrix();
    const double want = (Wout * u)(0, 0) + theta[lay.b_out];
    REQUIRE(std::abs(got - want) <= 1e-15);
}

TEST_CASE("zero head weight returns the head bias everywhere") {
    ModelConfig cfg = small_xlstm(8, 2, 2);
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta = pinn::init_params(cfg, 51);
    theta.segment(lay.w_out, 8).setZero();
    theta[lay.b_out] = 0.625;
    pinn::Rng rng(52);
    for (int trial = 0; trial < 5; ++trial) {
        const std::vector<double> x = random_point(rng, 2);
        REQUIRE(pinn::forward_scalar<double>(cfg, lay, theta, x) == 0.625);
    }
}

TEST_CASE("gated model with zero steps and mixer equals the plain baseline") {
    ModelConfig xc = small_xlstm(8, 2, 0);
    const ParamLayout xl = ParamLayout::build(xc);
    Eigen::VectorXd xt = pinn::init_params(xc, 61);
    for (int l = 0; l < 2; ++l) {
        for (const char* nm : {".M1", ".M2"}) {
            const auto* e = xl.find("blk" + std::to_string(l) + nm);
            xt.segment(e->offset, e->rows * e->cols).setZero();
        }
    }

    ModelConfig bc = xc;
    bc.arch = Arch::Baseline;
    const ParamLayout bl = ParamLayout::build(bc);
    Eigen::VectorXd bt(bl.total);
    bt.segment(bl.w_in, 16) = xt.segment(xl.w_in, 16);
    bt.segment(bl.b_in, 8) = xt.segment(xl.b_in, 8);
    for (int l = 0; l < 2; ++l) {
        bt.segment(bl.layers[l].first, 64) = xt.segment(xl.blocks[l].Wsh, 64);
        bt.segment(bl.layers[l].second, 8) = xt.segment(xl.blocks[l].bsh, 8);
    }
    bt.segment(bl.w_out, 8) = xt.segment(xl.w_out, 8);
    bt[bl.b_out] = xt[xl.b_out];

    pinn::Rng rng(62);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> x = random_point(rng, 2);
        REQUIRE(pinn::forward_scalar<double>(xc, xl, xt, x) ==
                pinn::forward_scalar<double>(bc, bl, bt, x));
    }
}

TEST_CASE("tape forward matches scalar jets coefficient by coefficient") {
    for (bool ln : {false, true}) {
        ModelConfig cfg = small_xlstm(6, 2, 2);
        cfg.layer_norm = ln;
        const ParamLayout lay = ParamLayout::build(cfg);
        const Eigen::VectorXd theta = pinn::init_params(cfg, 71);
        pinn::Rng rng(72);
        pinn::Arr pts(5, 2);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 2; ++j) pts(i, j) = rng.uniform(-1.0, 1.0);

        Eigen::VectorXd grad = Eigen::VectorXd::Zero(lay.total);
        pinn::Tape tape(&theta, &grad, 5, 2);
        const int out = pinn::build_forward(tape, cfg, lay, tape.input(pts, 0));

        using J2 = pinn::Jet<double, 2>;
        for (int p = 0; p < 5; ++p) {
            const std::vector<J2> x = {J2::seeded(pts(p, 0)), J2(pts(p, 1))};
            const J2 want = pinn::forward_scalar<J2>(cfg, lay, theta, x);
            for (int k = 0; k <= 2; ++k) {
                const double got = tape.value(out).c[k](p, 0);
                INFO("ln " << ln << " point " << p << " coeff " << k);
                REQUIRE(std::abs(got - want.c[k]) <= 1e-12 * std::max(1.0, std::abs(want.c[k])));
            }
        }
    }
}

TEST_CASE("model tape gradient matches finite differences through gating") {
    ModelConfig cfg = small_xlstm(4, 1, 2);
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta = pinn::init_params(cfg, 81);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(lay.total);
    pinn::Rng rng(82);
    pinn::Arr pts(5, 2);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 2; ++j) pts(i, j) = rng.uniform(-1.0, 1.0);

    pinn::Tape tape(&theta, &grad, 5, 2);
    const int out = pinn::build_forward(tape, cfg, lay, tape.input(pts, 0));

    const auto loss = [&]() {
        const auto& v = tape.value(out);
        return (v.c[2] - 0.3).square().mean() + 0.5 * v.c[0].square().mean();
    };

    tape.forward();
    tape.zero_adjoints();
    const auto& v = tape.value(out);
    tape.adjoint(out).c[2] = 2.0 * (v.c[2] - 0.3) / 5.0;
    tape.adjoint(out).c[0] = v.c[0] / 5.0;
    grad.setZero();
    tape.backward();
    const Eigen::VectorXd ad = grad;

    for (Eigen::Index i = 0; i < lay.total; ++i) {
        const double step = 1e-4 * std::max(1.0, std::abs(theta[i]));
        const double keep = theta[i];
        theta[i] = keep + step;
        tape.forward();
        const double lp = loss();
        theta[i] = keep - step;
        tape.forward();
        const double lm = loss();
        theta[i] = keep;
        const double fd = (lp - lm) / (2.0 * step);
        const double scale = std::max({1e-6, std::abs(fd), std::abs(ad[i])});
        INFO("theta " << i << " (" << lay.entries.size() << " entries) fd " << fd << " ad "
                      << ad[i]);
        REQUIRE(std::abs(fd - ad[i]) <= 1e-5 * scale);
    }
}

TEST_CASE("non-finite parameters fault with the offending stage named") {
    ModelConfig cfg = small_xlstm(4, 1, 1);
    const ParamLayout lay = ParamLayout::build(cfg);
    Eigen::VectorXd theta = pinn::init_params(cfg, 91);
    theta[lay.w_in] = std::numeric_limits<double>::infinity();
    const double x[2] = {0.5, 0.5};
    try {
        pinn::forward_scalar<double>(cfg, lay, theta, x);
        FAIL("expected a fault");
    } catch (const pinn::ModelFault& e) {
        REQUIRE(std::string(e.what()).find("input embedding") != std::string::npos);
    }

    theta = pinn::init_params(cfg, 91);
    theta[lay.blocks[0].bg] = std::numeric_limits<double>::quiet_NaN();
    try {
        pinn::forward_scalar<double>(cfg, lay, theta, x);
        FAIL("expected a fault");
    } catch (const pinn::ModelFault& e) {
        REQUIRE(std::string(e.what()).find("gate pre-activation") != std::string::npos);
    }
}

TEST_CASE("config validation rejects degenerate settings") {
    ModelConfig cfg = small_xlstm();
    cfg.micro_steps = 0;
    REQUIRE_THROWS_AS(cfg.validate(), pinn::ConfigError);
    cfg = small_xlstm();
    cfg.width = 0;
    REQUIRE_THROWS_AS(cfg.validate(), pinn::ConfigError);
    cfg = small_xlstm();
    cfg.eps = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), pinn::ConfigError);
    cfg = small_xlstm();
    cfg.arch = Arch::Baseline;
    cfg.micro_steps = 0;  // ignored by the baseline
    cfg.validate();
    SUCCEED();
}
