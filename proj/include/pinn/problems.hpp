#pragma once

// Benchmark definitions. A ProblemSpec is data: sample-set recipes, and loss
// terms written as linear combinations of raw directional derivatives of the
// field, evaluated on one set and compared against a target. The same term
// descriptors drive the scalar evaluator here (tests, references) and the
// batched tape assembly used in training, so the two paths cannot drift apart.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/jet.hpp"
#include "pinn/tape.hpp"

namespace pinn {

using PointFn = std::function<double(std::span<const double>)>;
using LocusFn = std::function<bool(std::span<const double>)>;

// One summand of a term: coeff * scale(x) * (d^order field / d axis^order).
// order 0 reads the plain field value (direction ignored).
struct Piece {
    int direction = 0;
    int order = 0;
    double coeff = 1.0;
    PointFn scale;  // null: constant 1
};

struct Term {
    std::string name;
    int set = 0;  // index into the problem's sample sets
    double weight = 1.0;
    std::vector<Piece> pieces;
    PointFn target;  // null: 0
};

struct SetSpec {
    std::string name;
    int count = 0;
    std::function<void(Rng&, Arr&)> sampler;  // fills a (count x dim) block
    LocusFn on_locus;                         // null: the domain interior
};

enum class GridKind { Box, Polar };

struct ProblemSpec {
    std::string name;
    int dim = 2;
    std::array<double, 4> bbox{};  // x_lo, x_hi, y_lo, y_hi
    bool disk_domain = false;
    PointFn reference;
    std::vector<SetSpec> sets;
    std::vector<Term> terms;
    int residual_term = 0;
    GridKind grid_kind = GridKind::Box;
    int grid_nx = 201, grid_ny = 201;  // Polar: nx = radial, ny = angular

    bool inside(std::span<const double> p) const {
        if (disk_domain) return p[0] * p[0] + p[1] * p[1] <= 1.0 + 1e-12;
        return p[0] >= bbox[0] - 1e-12 && p[0] <= bbox[1] + 1e-12 && p[1] >= bbox[2] - 1e-12 &&
               p[1] <= bbox[3] + 1e-12;
    }
};

namespace detail {

template <int K, typename F>
std::array<double, 5> raw_derivs_fixed(F&& f, std::span<const double> pt, int dir) {
    const auto c = jet_coeffs<K>(f, pt, dir);
    std::array<double, 5> d{};
    double fact = 1.0;
    for (int k = 0; k <= K; ++k) {
        if (k >= 2) fact *= k;
        d[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)] * fact;
    }
    return d;
}

// Raw derivatives d^0..d^max_order of the field along one axis.
template <typename F>
std::array<double, 5> raw_derivs(F&& f, std::span<const double> pt, int dir, int max_order) {
    switch (max_order) {
        case 1: return raw_derivs_fixed<1>(f, pt, dir);
        case 2: return raw_derivs_fixed<2>(f, pt, dir);
        case 3: return raw_derivs_fixed<3>(f, pt, dir);
        case 4: return raw_derivs_fixed<4>(f, pt, dir);
        default: throw StructuralError("derivative order must be in 1..4");
    }
}

}  // namespace detail

// Weighted-derivative combination minus target at one point; the scalar twin
// of the batched training assembly.
template <typename F>
double term_value_at(const Term& term, F&& field, std::span<const double> pt) {
    std::array<int, 2> need{0, 0};
    for (const auto& p : term.pieces)
        if (p.order > 0) need[static_cast<std::size_t>(p.direction)] =
            std::max(need[static_cast<std::size_t>(p.direction)], p.order);

    std::array<std::array<double, 5>, 2> derivs{};
    std::array<bool, 2> have{false, false};
    for (int axis = 0; axis < 2; ++axis)
        if (need[static_cast<std::size_t>(axis)] > 0) {
            derivs[static_cast<std::size_t>(axis)] =
                detail::raw_derivs(field, pt, axis, need[static_cast<std::size_t>(axis)]);
            have[static_cast<std::size_t>(axis)] = true;
        }

    double value = 0.0;
    bool value_known = false;
    if (have[0] || have[1]) {
        value = have[0] ? derivs[0][0] : derivs[1][0];
        value_known = true;
    }

    double sum = 0.0;
    for (const auto& p : term.pieces) {
        double d;
        if (p.order == 0) {
            if (!value_known) {
                value = field(pt);
                value_known = true;
            }
            d = value;
        } else {
            d = derivs[static_cast<std::size_t>(p.direction)][static_cast<std::size_t>(p.order)];
        }
        sum += p.coeff * (p.scale ? p.scale(pt) : 1.0) * d;
    }
    return sum - (term.target ? term.target(pt) : 0.0);
}

template <typename F>
double residual(const ProblemSpec& spec, F&& field, std::span<const double> pt) {
    if (!spec.inside(pt)) throw DomainError(spec.name + ": point outside domain");
    return term_value_at(spec.terms[static_cast<std::size_t>(spec.residual_term)], field, pt);
}

template <typename F>
double constraint_residual(const ProblemSpec& spec, F&& field, int term_index,
                           std::span<const double> pt) {
    const auto& term = spec.terms.at(static_cast<std::size_t>(term_index));
    const auto& locus = spec.sets[static_cast<std::size_t>(term.set)].on_locus;
    if (locus && !locus(pt)) throw DomainError(spec.name + ": point off the constraint locus");
    if (!locus && !spec.inside(pt)) throw DomainError(spec.name + ": point outside domain");
    return term_value_at(term, field, pt);
}

// Collocation draw: one rng stream, sets filled in declaration order.
struct SampleSets {
    std::vector<Arr> sets;
    std::uint64_t fingerprint = 0;
};

inline SampleSets sample(const ProblemSpec& spec, std::uint64_t seed) {
    SampleSets out;
    Rng rng(derive_seed(seed, spec.name));
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : spec.sets) {
        Arr pts(s.count, spec.dim);
        s.sampler(rng, pts);
        h = hash_bytes(pts.data(),
                       sizeof(double) * static_cast<std::size_t>(pts.size()), h);
        out.sets.push_back(std::move(pts));
    }
    out.fingerprint = h;
    return out;
}

// Dense validation grid, row-major over (nx, ny); Polar grids map (r, angle)
// rings to Cartesian points on the disk.
inline Arr validation_grid(const ProblemSpec& spec) {
    const int nx = spec.grid_nx, ny = spec.grid_ny;
    Arr g(static_cast<Eigen::Index>(nx) * ny, 2);
    Eigen::Index row = 0;
    if (spec.grid_kind == GridKind::Box) {
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j, ++row) {
                g(row, 0) = spec.bbox[0] + (spec.bbox[1] - spec.bbox[0]) * i / (nx - 1.0);
                g(row, 1) = spec.bbox[2] + (spec.bbox[3] - spec.bbox[2]) * j / (ny - 1.0);
            }
    } else {
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j, ++row) {
                const double r = i / (nx - 1.0);
                const double a = 2.0 * std::numbers::pi * j / ny;
                g(row, 0) = r * std::cos(a);
                g(row, 1) = r * std::sin(a);
            }
    }
    return g;
}

// Templated analytic references; usable with plain doubles and with jets, so
// the consistency tests can push them through the residual operators.

struct AdvectionRef {
    template <typename T>
    T operator()(std::span<const T> p) const {
        using std::exp;
        return exp(p[0] * -3.0 + p[1] * -2.0) * 6.0;
    }
};

struct LaplaceRef {
    template <typename T>
    T operator()(std::span<const T> p) const {
        return p[1];
    }
};

struct DiskRef {
    double Bi = 1.0;
    template <typename T>
    T operator()(std::span<const T> p) const {
        return (p[0] * p[0] + p[1] * p[1]) * -0.25 + (0.25 + 0.5 / Bi);
    }
};

struct BeamRef {
    template <typename T>
    T operator()(std::span<const T> p) const {
        using std::exp;
        return p[0] * p[0] * exp(p[1] * -1.0);
    }
};

namespace detail {

inline std::function<void(Rng&, Arr&)> box_sampler(double x0, double x1, double y0, double y1) {
    return [=](Rng& rng, Arr& pts) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            pts(i, 0) = rng.uniform(x0, x1);
            pts(i, 1) = rng.uniform(y0, y1);
        }
    };
}

// axis held fixed at `value`, the other uniform in [lo, hi].
inline std::function<void(Rng&, Arr&)> edge_sampler(int fixed_axis, double value, double lo,
                                                    double hi) {
    return [=](Rng& rng, Arr& pts) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            pts(i, fixed_axis) = value;
            pts(i, 1 - fixed_axis) = rng.uniform(lo, hi);
        }
    };
}

inline LocusFn edge_locus(int fixed_axis, double value, double lo, double hi) {
    return [=](std::span<const double> p) {
        return std::abs(p[static_cast<std::size_t>(fixed_axis)] - value) <= 1e-12 &&
               p[static_cast<std::size_t>(1 - fixed_axis)] >= lo - 1e-12 &&
               p[static_cast<std::size_t>(1 - fixed_axis)] <= hi + 1e-12;
    };
}

}  // namespace detail

// u_t + a u_x + b u = 0 on [0,2]x[0,1], a=-1/2 b=1/2, inflow on the right edge.
inline ProblemSpec make_advection() {
    constexpr double a = -0.5, b = 0.5;
    ProblemSpec s;
    s.name = "advection1d";
    s.bbox = {0.0, 2.0, 0.0, 1.0};
    s.reference = [](std::span<const double> p) { return AdvectionRef{}(p); };
    s.grid_nx = 201;
    s.grid_ny = 101;
    s.sets = {
        {"interior", 3000, detail::box_sampler(0, 2, 0, 1), nullptr},
        {"t0", 250, detail::edge_sampler(1, 0.0, 0, 2), detail::edge_locus(1, 0.0, 0, 2)},
        {"x2", 250, detail::edge_sampler(0, 2.0, 0, 1), detail::edge_locus(0, 2.0, 0, 1)},
    };
    s.terms = {
        {"residual", 0, 1.0,
         {{1, 1, 1.0, nullptr}, {0, 1, a, nullptr}, {0, 0, b, nullptr}},
         nullptr},
        {"initial", 1, 1.0, {{0, 0, 1.0, nullptr}},
         [](std::span<const double> p) { return 6.0 * std::exp(-3.0 * p[0]); }},
        {"inflow", 2, 1.0, {{0, 0, 1.0, nullptr}},
         [](std::span<const double> p) { return 6.0 * std::exp(-6.0 - 2.0 * p[1]); }},
    };
    return s;
}

// phi_xx + phi_yy = 0 on the unit square; Dirichlet top/bottom, zero Neumann
// on the vertical edges.
inline ProblemSpec make_laplace() {
    ProblemSpec s;
    s.name = "laplace2d";
    s.bbox = {0.0, 1.0, 0.0, 1.0};
    s.reference = [](std::span<const double> p) { return LaplaceRef{}(p); };
    s.sets = {
        {"interior", 1000, detail::box_sampler(0, 1, 0, 1), nullptr},
        {"y0", 1000, detail::edge_sampler(1, 0.0, 0, 1), detail::edge_locus(1, 0.0, 0, 1)},
        {"y1", 1000, detail::edge_sampler(1, 1.0, 0, 1), detail::edge_locus(1, 1.0, 0, 1)},
        {"x0", 1000, detail::edge_sampler(0, 0.0, 0, 1), detail::edge_locus(0, 0.0, 0, 1)},
        {"x1", 1000, detail::edge_sampler(0, 1.0, 0, 1), detail::edge_locus(0, 1.0, 0, 1)},
    };
    s.terms = {
        {"residual", 0, 1.0, {{0, 2, 1.0, nullptr}, {1, 2, 1.0, nullptr}}, nullptr},
        {"dirichlet_y0", 1, 1.0, {{0, 0, 1.0, nullptr}}, nullptr},
        {"dirichlet_y1", 2, 1.0, {{0, 0, 1.0, nullptr}},
         [](std::span<const double>) { return 1.0; }},
        {"neumann_x0", 3, 1.0, {{0, 1, 1.0, nullptr}}, nullptr},
        {"neumann_x1", 4, 1.0, {{0, 1, 1.0, nullptr}}, nullptr},
    };
    return s;
}

// theta_xx + theta_yy + 1 = 0 on the unit disk; Robin rim -d theta/dn = Bi
// theta. Area-uniform interior sampling via r = sqrt(v).
inline ProblemSpec make_disk(double Bi = 1.0) {
    ProblemSpec s;
    s.name = "disk-robin";
    s.bbox = {-1.0, 1.0, -1.0, 1.0};
    s.disk_domain = true;
    s.reference = [Bi](std::span<const double> p) { return DiskRef{Bi}(p); };
    s.grid_kind = GridKind::Polar;
    s.grid_nx = 101;
    s.grid_ny = 256;
    s.sets = {
        {"interior", 3000,
         [](Rng& rng, Arr& pts) {
             for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                 const double r = std::sqrt(rng.uniform());
                 const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
                 pts(i, 0) = r * std::cos(a);
                 pts(i, 1) = r * std::sin(a);
             }
         },
         nullptr},
        {"rim", 500,
         [](Rng& rng, Arr& pts) {
             for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                 const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
                 pts(i, 0) = std::cos(a);
                 pts(i, 1) = std::sin(a);
             }
         },
         [](std::span<const double> p) {
             return std::abs(p[0] * p[0] + p[1] * p[1] - 1.0) < 1e-12;
         }},
    };
    // Robin residual -grad(theta).n - Bi theta with n = (x, y) on the rim.
    s.terms = {
        {"residual", 0, 1.0, {{0, 2, 1.0, nullptr}, {1, 2, 1.0, nullptr}},
         [](std::span<const double>) { return -1.0; }},
        {"robin", 1, 1.0,
         {{0, 1, -1.0, [](std::span<const double> p) { return p[0]; }},
          {1, 1, -1.0, [](std::span<const double> p) { return p[1]; }},
          {0, 0, -Bi, nullptr}},
         nullptr},
    };
    return s;
}

// u_xx - u_yyyy = (2 - x^2) e^{-y} on the unit square; u and u_yy pinned on
// the horizontal edges, Dirichlet data on the vertical edges.
inline ProblemSpec make_beam() {
    ProblemSpec s;
    s.name = "poisson-beam";
    s.bbox = {0.0, 1.0, 0.0, 1.0};
    s.reference = [](std::span<const double> p) { return BeamRef{}(p); };
    s.sets = {
        {"interior", 1000, detail::box_sampler(0, 1, 0, 1), nullptr},
        {"y0_u", 1000, detail::edge_sampler(1, 0.0, 0, 1), detail::edge_locus(1, 0.0, 0, 1)},
        {"y1_u", 1000, detail::edge_sampler(1, 1.0, 0, 1), detail::edge_locus(1, 1.0, 0, 1)},
        {"y0_yy", 1000, detail::edge_sampler(1, 0.0, 0, 1), detail::edge_locus(1, 0.0, 0, 1)},
        {"y1_yy", 1000, detail::edge_sampler(1, 1.0, 0, 1), detail::edge_locus(1, 1.0, 0, 1)},
        {"x0", 1000, detail::edge_sampler(0, 0.0, 0, 1), detail::edge_locus(0, 0.0, 0, 1)},
        {"x1", 1000, detail::edge_sampler(0, 1.0, 0, 1), detail::edge_locus(0, 1.0, 0, 1)},
    };
    const auto x_sq = [](std::span<const double> p) { return p[0] * p[0]; };
    const auto x_sq_over_e = [](std::span<const double> p) {
        return p[0] * p[0] / std::numbers::e;
    };
    s.terms = {
        {"residual", 0, 1.0, {{0, 2, 1.0, nullptr}, {1, 4, -1.0, nullptr}},
         [](std::span<const double> p) { return (2.0 - p[0] * p[0]) * std::exp(-p[1]); }},
        {"u_y0", 1, 1.0, {{0, 0, 1.0, nullptr}}, x_sq},
        {"u_y1", 2, 1.0, {{0, 0, 1.0, nullptr}}, x_sq_over_e},
        {"uyy_y0", 3, 1.0, {{1, 2, 1.0, nullptr}}, x_sq},
        {"uyy_y1", 4, 1.0, {{1, 2, 1.0, nullptr}}, x_sq_over_e},
        {"u_x0", 5, 1.0, {{0, 0, 1.0, nullptr}}, nullptr},
        {"u_x1", 6, 1.0, {{0, 0, 1.0, nullptr}},
         [](std::span<const double> p) { return std::exp(-p[1]); }},
    };
    return s;
}

inline std::vector<std::string> problem_names() {
    return {"advection1d", "laplace2d", "disk-robin", "poisson-beam"};
}

inline ProblemSpec problem_by_name(std::string_view name, double Bi = 1.0) {
    if (name == "advection1d") return make_advection();
    if (name == "laplace2d") return make_laplace();
    if (name == "disk-robin") return make_disk(Bi);
    if (name == "poisson-beam") return make_beam();
    throw ConfigError("unknown problem: " + std::string(name));
}

// sin(2 pi k.x + phase) on [-1,1]^d; callable with doubles and with jets.
struct PlaneWave {
    Eigen::VectorXd k;
    double phase = 0.0;

    template <typename T>
    T operator()(std::span<const T> x) const {
        using std::sin;
        T arg(phase);
        for (Eigen::Index i = 0; i < k.size(); ++i)
            arg = arg + x[static_cast<std::size_t>(i)] * (2.0 * std::numbers::pi * k[i]);
        return sin(arg);
    }

    double operator()(std::span<const double> x) const {
        double arg = phase;
        for (Eigen::Index i = 0; i < k.size(); ++i) arg += 2.0 * std::numbers::pi * k[i] * x[i];
        return std::sin(arg);
    }
};

inline PlaneWave plane_wave_target(Eigen::VectorXd k, double phase = 0.0) {
    return PlaneWave{std::move(k), phase};
}

}  // namespace pinn
