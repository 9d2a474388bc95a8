#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/jet.hpp"
#include "pinn/tape.hpp"

using pinn::Arr;
using pinn::LinearSpec;
using pinn::Tape;

namespace {

Eigen::VectorXd random_vector(pinn::Rng& rng, Eigen::Index n, double lo = -0.8, double hi = 0.8) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

Arr random_array(pinn::Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                 double hi = 1.0) {
    Arr a(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) a(i, j) = rng.uniform(lo, hi);
    return a;
}

// Composite graph touching every tape primitive; returns the output node id.
struct Harness {
    Eigen::VectorXd theta;
    Eigen::VectorXd grad;
    LinearSpec l1{0, 6, 2, 12};        // W1 6x2, b1 6
    LinearSpec lz{18, 1, 3, -1};       // Wz 1x3, no bias
    LinearSpec lc{21, 1, 6, 27};       // Wc 1x6, bc 1
    static constexpr Eigen::Index kDim = 28;

    std::unique_ptr<Tape> tape;
    int out = -1;

    explicit Harness(pinn::Rng& rng, const Arr& points, int order) {
        theta = random_vector(rng, kDim);
        grad = Eigen::VectorXd::Zero(kDim);
        tape = std::make_unique<Tape>(&theta, &grad, points.rows(), order);
        const int x = tape->input(points, 0);
        const int h1 = tape->linear(x, l1);
        const int a = tape->tanh(h1);
        const int b = tape->sigmoid(h1);
        const int m = tape->mul(a, b);
        const int e = tape->exp(tape->scale(tape->slice(h1, 0, 3), 0.1));
        const int g = tape->log_sigmoid(tape->slice(h1, 3, 3));
        const int r = tape->recip(tape->add_scalar(tape->mul(e, e), 1.5));
        const int q = tape->sqrt(tape->add_scalar(tape->mul(b, b), 0.25));
        const int mx = tape->max(a, b);
        const int cl = tape->clip(mx, -0.5, 0.5);
        const int bc = tape->broadcast(tape->row_mean(m), 3);
        const int z = tape->add(tape->sub(tape->add(r, bc), g), e);
        const int head1 = tape->linear(z, lz);
        const int head2 = tape->linear(tape->mul(cl, q), lc);
        out = tape->add(head1, head2);
    }
};

// Scalar loss over output coefficients: sum_k w_k * mean((c_k - t_k)^2).
double loss_of(const pinn::Coeffs& v, const std::vector<double>& w,
               const std::vector<double>& t) {
    double L = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        L += w[k] * (v.c[k] - t[k]).square().mean();
    return L;
}

void seed_loss(Tape& tape, int out, const std::vector<double>& w, const std::vector<double>& t) {
    tape.zero_adjoints();
    auto& adj = tape.adjoint(out);
    const auto& val = tape.value(out);
    const double n = static_cast<double>(val.c[0].rows());
    for (std::size_t k = 0; k < w.size(); ++k)
        adj.c[k] = 2.0 * w[k] * (val.c[k] - t[k]) / n;
}

}  // namespace

TEST_CASE("tape gradients match central finite differences") {
    pinn::Rng rng(0xfeed5eed);
    const Arr points = random_array(rng, 7, 2);
    Harness h(rng, points, 2);
    const std::vector<double> w = {1.0, 0.7, 0.4};
    const std::vector<double> t = {0.3, 0.0, 1.0};

    h.tape->forward();
    seed_loss(*h.tape, h.out, w, t);
    h.grad.setZero();
    h.tape->backward();
    const Eigen::VectorXd ad = h.grad;

    for (Eigen::Index i = 0; i < Harness::kDim; ++i) {
        const double step = 1e-4 * std::max(1.0, std::abs(h.theta[i]));
        const double keep = h.theta[i];
        h.theta[i] = keep + step;
        h.tape->forward();
        const double lp = loss_of(h.tape->value(h.out), w, t);
        h.theta[i] = keep - step;
        h.tape->forward();
        const double lm = loss_of(h.tape->value(h.out), w, t);
        h.theta[i] = keep;
        const double fd = (lp - lm) / (2.0 * step);
        const double scale = std::max({1e-6, std::abs(fd), std::abs(ad[i])});
        INFO("theta index " << i << " fd " << fd << " ad " << ad[i]);
        REQUIRE(std::abs(fd - ad[i]) <= 1e-5 * scale);
    }
}

TEST_CASE("tape coefficients match scalar jets on a two-layer network") {
    pinn::Rng rng(0xc0ffee);
    const Eigen::Index n = 11;
    const Arr points = random_array(rng, n, 2);

    Eigen::VectorXd theta = random_vector(rng, 6 * 2 + 6 + 1 * 6 + 1);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    const LinearSpec l1{0, 6, 2, 12};
    const LinearSpec l2{18, 1, 6, 24};

    Tape tape(&theta, &grad, n, 2);
    const int x = tape.input(points, 1);
    const int out = tape.linear(tape.tanh(tape.linear(x, l1)), l2);
    tape.forward();

    const Eigen::Map<const Eigen::MatrixXd> W1(theta.data(), 6, 2);
    const Eigen::Map<const Eigen::VectorXd> b1(theta.data() + 12, 6);
    const Eigen::Map<const Eigen::MatrixXd> W2(theta.data() + 18, 1, 6);
    const double b2 = theta[24];

    using J2 = pinn::Jet<double, 2>;
    for (Eigen::Index p = 0; p < n; ++p) {
        J2 xs[2] = {J2(points(p, 0)), J2::seeded(points(p, 1))};
        J2 acc(b2);
        for (int o = 0; o < 6; ++o) {
            J2 pre(b1[o]);
            for (int i = 0; i < 2; ++i) pre = pre + xs[i] * W1(o, i);
            acc = acc + tanh(pre) * W2(0, o);
        }
        const auto& v = tape.value(out);
        for (int k = 0; k <= 2; ++k) {
            INFO("point " << p << " coeff " << k);
            REQUIRE(std::abs(v.c[k](p, 0) - acc.c[k]) <= 1e-12 * std::max(1.0, std::abs(acc.c[k])));
        }
    }
}

TEST_CASE("linear layer gradient has the closed form") {
    pinn::Rng rng(31);
    const Eigen::Index n = 9;
    const Arr x = random_array(rng, n, 2);
    const Arr y = random_array(rng, n, 3);

    Eigen::VectorXd theta = random_vector(rng, 3 * 2 + 3);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    Tape tape(&theta, &grad, n, 0);
    const int out = tape.linear(tape.input(x), LinearSpec{0, 3, 2, 6});

    tape.forward();
    tape.zero_adjoints();
    const Arr resid = tape.value(out).c[0] - y;
    tape.adjoint(out).c[0] = 2.0 * resid / static_cast<double>(n);
    tape.backward();

    const Eigen::MatrixXd gW =
        2.0 / static_cast<double>(n) * resid.matrix().transpose() * x.matrix();
    const Eigen::VectorXd gb =
        2.0 / static_cast<double>(n) * resid.colwise().sum().matrix().transpose();
    const Eigen::Map<const Eigen::MatrixXd> gotW(grad.data(), 3, 2);
    const Eigen::Map<const Eigen::VectorXd> gotb(grad.data() + 6, 3);
    REQUIRE((gotW - gW).cwiseAbs().maxCoeff() <= 1e-13);
    REQUIRE((gotb - gb).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("tape ties follow the left branch") {
    Eigen::VectorXd theta(1), grad(1);
    theta.setZero();
    Tape tape(&theta, &grad, 1, 1);
    Arr pa(1, 1), pb(1, 1);
    pa(0, 0) = 1.0;
    pb(0, 0) = 1.0;
    const int a = tape.input(pa, 0);   // seeded: c1 = 1
    const int b = tape.input(pb);      // unseeded: c1 = 0
    const int m = tape.max(a, b);
    REQUIRE(tape.value(m).c[1](0, 0) == 1.0);

    const int cl = tape.clip(a, 1.0, 2.0);  // boundary value passes through
    REQUIRE(tape.value(cl).c[1](0, 0) == 1.0);
    const int cl2 = tape.clip(b, 2.0, 3.0);
    REQUIRE(tape.value(cl2).c[0](0, 0) == 2.0);
}

TEST_CASE("tape runs are bit-identical") {
    pinn::Rng rng(8);
    const Arr points = random_array(rng, 5, 2);
    Harness h(rng, points, 2);
    const std::vector<double> w = {1.0, 0.5, 0.25};
    const std::vector<double> t = {0.0, 0.0, 0.0};

    h.tape->forward();
    seed_loss(*h.tape, h.out, w, t);
    h.grad.setZero();
    h.tape->backward();
    const Eigen::VectorXd g1 = h.grad;
    const Arr v1 = h.tape->value(h.out).c[2];

    h.tape->forward();
    seed_loss(*h.tape, h.out, w, t);
    h.grad.setZero();
    h.tape->backward();
    REQUIRE((h.grad - g1).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((h.tape->value(h.out).c[2] - v1).abs().maxCoeff() == 0.0);
}

TEST_CASE("tape guards reject malformed graphs") {
    Eigen::VectorXd theta(10), grad(10);
    theta.setZero();
    Tape tape(&theta, &grad, 4, 1);
    Arr p = Arr::Zero(4, 2);
    const int x = tape.input(p, 0);
    REQUIRE_THROWS_AS(tape.input(Arr::Zero(3, 2)), pinn::StructuralError);
    REQUIRE_THROWS_AS(tape.input(p, 5), pinn::StructuralError);
    REQUIRE_THROWS_AS(tape.linear(x, LinearSpec{0, 2, 3, -1}), pinn::StructuralError);
    REQUIRE_THROWS_AS(tape.slice(x, 1, 4), pinn::StructuralError);
    REQUIRE_THROWS_AS(tape.recip(x), pinn::DomainError);
    REQUIRE_THROWS_AS(tape.sqrt(x), pinn::DomainError);
}
