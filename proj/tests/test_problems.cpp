#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/problems.hpp"

using pinn::ProblemSpec;

namespace {

void require_close(double got, double want, double atol) {
    INFO("got " << got << " want " << want);
    REQUIRE(std::abs(got - want) <= atol);
}

// The analytic reference of each problem, as a jet-capable functor.
struct RefField {
    const ProblemSpec* spec;

    template <typename T>
    T operator()(std::span<const T> p) const {
        if (spec->name == "advection1d") return pinn::AdvectionRef{}(p);
        if (spec->name == "laplace2d") return pinn::LaplaceRef{}(p);
        if (spec->name == "disk-robin") return pinn::DiskRef{1.0}(p);
        return pinn::BeamRef{}(p);
    }
};

std::array<double, 2> pt(double x, double y) { return {x, y}; }

}  // namespace

TEST_CASE("residual operators reproduce the stated examples") {
    // u = t has unit time derivative, so the advection residual at t = 0 is 1.
    const auto u_is_t = [](auto p) { return p[1]; };
    const auto adv = pinn::make_advection();
    require_close(pinn::residual(adv, u_is_t, pt(0.7, 0.0)), 1.0, 1e-14);
    require_close(pinn::residual(adv, u_is_t, pt(0.7, 0.4)), 1.0 + 0.5 * 0.4, 1e-14);

    const auto beam = pinn::make_beam();
    require_close(beam.terms[0].target(pt(0.5, 0.0)), 1.75, 1e-14);

    const auto lap = pinn::make_laplace();
    require_close(pinn::constraint_residual(lap, u_is_t, 2, pt(0.3, 1.0)), 0.0, 1e-14);

    const auto disk = pinn::make_disk(1.0);
    const RefField theta{&disk};
    require_close(pinn::constraint_residual(disk, theta, 1, pt(0.0, 1.0)), 0.0, 1e-10);
}

TEST_CASE("analytic references satisfy their own equations everywhere") {
    pinn::Rng rng(pinn::derive_seed(7, "consistency"));
    for (const auto& name : pinn::problem_names()) {
        const auto spec = pinn::problem_by_name(name);
        const RefField ref{&spec};
        const auto sets = pinn::sample(spec, 99);
        for (std::size_t t = 0; t < spec.terms.size(); ++t) {
            const auto& term = spec.terms[t];
            const auto& points = sets.sets[static_cast<std::size_t>(term.set)];
            const Eigen::Index n = std::min<Eigen::Index>(points.rows(), 1000);
            for (Eigen::Index i = 0; i < n; ++i) {
                const std::array<double, 2> p{points(i, 0), points(i, 1)};
                const double r =
                    (static_cast<int>(t) == spec.residual_term)
                        ? pinn::residual(spec, ref, p)
                        : pinn::constraint_residual(spec, ref, static_cast<int>(t), p);
                INFO(name << " term " << term.name << " at (" << p[0] << ", " << p[1] << ")");
                REQUIRE(std::abs(r) < 1e-9);
                REQUIRE(std::isfinite(term.target ? term.target(p) : 0.0));
            }
        }
        (void)rng;
    }
}

TEST_CASE("rim flux sign convention is pinned") {
    // theta = y at the north pole: outward gradient 1, so the flux side
    // contributes -1 and the Newton side -Bi*theta = -1.
    const auto disk = pinn::make_disk(1.0);
    const auto field_y = [](auto p) { return p[1]; };
    require_close(pinn::constraint_residual(disk, field_y, 1, pt(0.0, 1.0)), -2.0, 1e-14);
}

TEST_CASE("evaluation off the locus or outside the domain is rejected") {
    const auto adv = pinn::make_advection();
    const auto f = [](auto p) { return p[0]; };
    REQUIRE_THROWS_AS(pinn::residual(adv, f, pt(2.5, 0.5)), pinn::DomainError);
    REQUIRE_THROWS_AS(pinn::residual(adv, f, pt(1.0, -0.2)), pinn::DomainError);
    REQUIRE_THROWS_AS(pinn::constraint_residual(adv, f, 1, pt(1.0, 0.5)), pinn::DomainError);

    const auto disk = pinn::make_disk(1.0);
    REQUIRE_THROWS_AS(pinn::residual(disk, f, pt(2.0, 0.0)), pinn::DomainError);
    REQUIRE_THROWS_AS(pinn::constraint_residual(disk, f, 1, pt(0.5, 0.5)), pinn::DomainError);
}

TEST_CASE("collocation draws are deterministic with the stated cardinalities") {
    struct Want {
        const char* name;
        std::vector<int> counts;
    };
    const std::vector<Want> wants = {
        {"advection1d", {3000, 250, 250}},
        {"laplace2d", {1000, 1000, 1000, 1000, 1000}},
        {"disk-robin", {3000, 500}},
        {"poisson-beam", {1000, 1000, 1000, 1000, 1000, 1000, 1000}},
    };
    for (const auto& want : wants) {
        const auto spec = pinn::problem_by_name(want.name);
        const auto a = pinn::sample(spec, 11);
        const auto b = pinn::sample(spec, 11);
        const auto c = pinn::sample(spec, 12);
        REQUIRE(a.sets.size() == want.counts.size());
        REQUIRE(a.fingerprint == b.fingerprint);
        REQUIRE(a.fingerprint != c.fingerprint);
        for (std::size_t s = 0; s < a.sets.size(); ++s) {
            REQUIRE(a.sets[s].rows() == want.counts[s]);
            REQUIRE(a.sets[s].cols() == 2);
            REQUIRE((a.sets[s] == b.sets[s]).all());
            const auto& locus = spec.sets[s].on_locus;
            for (Eigen::Index i = 0; i < a.sets[s].rows(); ++i) {
                const std::array<double, 2> p{a.sets[s](i, 0), a.sets[s](i, 1)};
                REQUIRE(spec.inside(p));
                if (locus) REQUIRE(locus(p));
            }
        }
    }
}

TEST_CASE("rim samples sit on the circle to rounding") {
    const auto disk = pinn::make_disk(1.0);
    const auto sets = pinn::sample(disk, 3);
    const auto& rim = sets.sets[1];
    for (Eigen::Index i = 0; i < rim.rows(); ++i)
        REQUIRE(std::abs(rim(i, 0) * rim(i, 0) + rim(i, 1) * rim(i, 1) - 1.0) < 1e-12);
}

TEST_CASE("interior sampling is area-uniform: centroids within three sigma") {
    for (const auto& name : pinn::problem_names()) {
        const auto spec = pinn::problem_by_name(name);
        const auto sets = pinn::sample(spec, 5);
        const auto& pts = sets.sets[0];
        const double n = static_cast<double>(pts.rows());
        for (int axis = 0; axis < 2; ++axis) {
            double want, sigma;
            if (spec.disk_domain) {
                want = 0.0;
                sigma = 0.5 / std::sqrt(n);  // second moment of the unit disk is 1/4
            } else {
                const double lo = axis == 0 ? spec.bbox[0] : spec.bbox[2];
                const double hi = axis == 0 ? spec.bbox[1] : spec.bbox[3];
                want = 0.5 * (lo + hi);
                sigma = (hi - lo) / std::sqrt(12.0 * n);
            }
            const double got = pts.col(axis).mean();
            INFO(name << " axis " << axis);
            REQUIRE(std::abs(got - want) <= 3.0 * sigma);
        }
    }
}

TEST_CASE("validation grids cover the stated shapes inside the domain") {
    const auto adv = pinn::make_advection();
    const auto ga = pinn::validation_grid(adv);
    REQUIRE(ga.rows() == 201 * 101);
    REQUIRE(ga.col(0).minCoeff() == 0.0);
    REQUIRE(ga.col(0).maxCoeff() == 2.0);
    REQUIRE(ga.col(1).maxCoeff() == 1.0);

    const auto lap = pinn::make_laplace();
    REQUIRE(pinn::validation_grid(lap).rows() == 201 * 201);

    const auto disk = pinn::make_disk(1.0);
    const auto gd = pinn::validation_grid(disk);
    REQUIRE(gd.rows() == 101 * 256);
    for (Eigen::Index i = 0; i < gd.rows(); ++i)
        REQUIRE(gd(i, 0) * gd(i, 0) + gd(i, 1) * gd(i, 1) <= 1.0 + 1e-12);
    // outermost ring reaches the rim
    REQUIRE(std::abs(gd.row(gd.rows() - 1).matrix().norm() - 1.0) < 1e-12);
}

TEST_CASE("plane waves carry unit-frequency content with norm 1/sqrt(2)") {
    // L2 norm under the uniform probability measure on [-1,1]^d, by Simpson
    // quadrature, for integer wavevectors.
    const auto simpson_1d = [](const std::function<double(double)>& f, double lo, double hi,
                               int n) {
        double acc = f(lo) + f(hi);
        const double h = (hi - lo) / n;
        for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
        return acc * h / 3.0;
    };

    Eigen::VectorXd k1(1);
    k1 << 3.0;
    const auto w1 = pinn::plane_wave_target(k1, 0.9);
    const double m2 = simpson_1d([&](double x) {
        const std::array<double, 1> p{x};
        const double v = w1(std::span<const double>(p));
        return v * v;
    }, -1.0, 1.0, 4096) / 2.0;
    require_close(std::sqrt(m2), 1.0 / std::numbers::sqrt2, 1e-9);

    Eigen::VectorXd k2(2);
    k2 << 3.0, -2.0;
    const auto w2 = pinn::plane_wave_target(k2, 0.4);
    const double m2d = simpson_1d([&](double y) {
        return simpson_1d([&](double x) {
            const std::array<double, 2> p{x, y};
            const double v = w2(std::span<const double>(p));
            return v * v;
        }, -1.0, 1.0, 512);
    }, -1.0, 1.0, 512) / 4.0;
    require_close(std::sqrt(m2d), 1.0 / std::numbers::sqrt2, 1e-9);

    // jets see the same function: d/dx sin(2 pi k x + phi) = 2 pi k cos(phi) at 0.
    const std::array<double, 1> origin{0.0};
    const auto jv = pinn::jet_eval(
        [&](std::span<const pinn::Jet4> p) { return w1(p); }, origin, 0, 1);
    require_close(jv.d(1), 2.0 * std::numbers::pi * 3.0 * std::cos(0.9), 1e-10);
}

TEST_CASE("beam derivative constraints read the second normal derivative") {
    // u = y^4 has u_yy = 12 y^2: the derivative constraint on the top edge
    // sees 12, minus the target x^2 / e.
    const auto beam = pinn::make_beam();
    const auto u = [](auto p) { return p[1] * p[1] * p[1] * p[1]; };
    const double got = pinn::constraint_residual(beam, u, 4, pt(0.5, 1.0));
    require_close(got, 12.0 - 0.25 / std::numbers::e, 1e-12);
}

TEST_CASE("unknown problem names are rejected") {
    REQUIRE_THROWS_AS(pinn::problem_by_name("advection"), pinn::ConfigError);
    REQUIRE_THROWS_AS(pinn::problem_by_name("spectral-probe"), pinn::ConfigError);
}
