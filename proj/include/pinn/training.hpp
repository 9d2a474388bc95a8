#pragma once

// Loss assembly and the training loop. A TrainingGraph records one tape per
// (sample set, derivative direction) pass, with the model subgraph rebuilt on
// each tape; term residuals are linear in the recorded Taylor coefficients,
// so the loss gradient is seeded directly into the output adjoints and pushed
// back through every tape into one flat gradient vector.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pinn/common.hpp"
#include "pinn/model.hpp"
#include "pinn/problems.hpp"
#include "pinn/tape.hpp"

namespace pinn {

// Per-term multipliers aligned with a problem's term list; empty keeps the
// problem's defaults (all 1).
struct LossWeights {
    std::vector<double> values;

    void apply(ProblemSpec& spec) const {
        if (values.empty()) return;
        if (values.size() != spec.terms.size())
            throw ConfigError("expected " + std::to_string(spec.terms.size()) + " loss weights");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(values[i] >= 0.0)) throw ConfigError("loss weights must be >= 0");
            spec.terms[i].weight = values[i];
        }
    }
};

struct LossBreakdown {
    std::vector<double> terms;  // mean squared residual per term, unweighted
    std::vector<double> weights;
    double total = 0.0;
    int iteration = 0;

    // Left-to-right weighted sum; `total` is produced by this exact loop, so
    // a recompute must match it bit for bit.
    double recompute() const {
        double s = 0.0;
        for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i];
        return s;
    }
};

namespace detail {

inline void check_sets(const ProblemSpec& spec, const SampleSets& sets) {
    if (sets.sets.size() != spec.sets.size())
        throw StructuralError("sample sets do not match the problem");
    for (const auto& term : spec.terms)
        if (term.weight != 0.0 && sets.sets[static_cast<std::size_t>(term.set)].rows() == 0)
            throw ConfigError("empty sample set under weighted term " + term.name);
}

inline double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

}  // namespace detail

// Scalar-path loss of an arbitrary jet-capable field over drawn sets; the
// reference solution plugs in here as a frozen network.
template <typename F>
LossBreakdown assemble_loss(const ProblemSpec& spec, F&& field, const SampleSets& sets) {
    detail::check_sets(spec, sets);
    LossBreakdown lb;
    for (const auto& term : spec.terms) {
        const auto& pts = sets.sets[static_cast<std::size_t>(term.set)];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const std::array<double, 2> p{pts(i, 0), pts(i, 1)};
            const double r = term_value_at(term, field, p);
            acc += r * r;
        }
        lb.terms.push_back(pts.rows() > 0 ? acc / static_cast<double>(pts.rows()) : 0.0);
        lb.weights.push_back(term.weight);
    }
    lb.total = lb.recompute();
    return lb;
}

// Norm of the loss gradient with respect to the per-point residuals; zero at
// the exact solution no matter how the field is parameterized.
template <typename F>
double functional_gradient_norm(const ProblemSpec& spec, F&& field, const SampleSets& sets) {
    detail::check_sets(spec, sets);
    double sq = 0.0;
    for (const auto& term : spec.terms) {
        const auto& pts = sets.sets[static_cast<std::size_t>(term.set)];
        const double n = static_cast<double>(pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const std::array<double, 2> p{pts(i, 0), pts(i, 1)};
            const double seed = 2.0 * term.weight / n * term_value_at(term, field, p);
            sq += seed * seed;
        }
    }
    return std::sqrt(sq);
}

// Model spread across tapes: one tape per sample set and derivative
// direction, built once; every optimizer step re-runs forward and backward.
class TrainingGraph {
  public:
    TrainingGraph(const ProblemSpec& spec, const SampleSets& sets, const ModelConfig& cfg,
                  const ParamLayout& lay, const Eigen::VectorXd* theta, Eigen::VectorXd* grad) {
        cfg.validate();
        detail::check_sets(spec, sets);

        struct Need {
            std::array<int, 2> order{0, 0};
            bool used = false;
        };
        std::vector<Need> need(spec.sets.size());
        for (const auto& term : spec.terms) {
            auto& nd = need[static_cast<std::size_t>(term.set)];
            nd.used = true;
            for (const auto& piece : term.pieces)
                if (piece.order > 0)
                    nd.order[static_cast<std::size_t>(piece.direction)] =
                        std::max(nd.order[static_cast<std::size_t>(piece.direction)], piece.order);
        }

        passes_.resize(spec.sets.size());
        for (std::size_t s = 0; s < spec.sets.size(); ++s) {
            if (!need[s].used || sets.sets[s].rows() == 0) continue;
            for (int axis = 0; axis < 2; ++axis)
                if (need[s].order[static_cast<std::size_t>(axis)] > 0)
                    add_pass(static_cast<int>(s), axis, need[s].order[static_cast<std::size_t>(axis)],
                             sets.sets[s], cfg, lay, theta, grad);
            if (passes_[s].empty())
                add_pass(static_cast<int>(s), -1, 0, sets.sets[s], cfg, lay, theta, grad);
        }

        for (const auto& term : spec.terms) {
            TermPlan plan;
            plan.weight = term.weight;
            const auto& pts = sets.sets[static_cast<std::size_t>(term.set)];
            plan.n = pts.rows();
            plan.target = Eigen::ArrayXd::Zero(plan.n);
            plan.resid = Eigen::ArrayXd::Zero(plan.n);
            for (Eigen::Index i = 0; i < plan.n; ++i) {
                const std::array<double, 2> p{pts(i, 0), pts(i, 1)};
                if (term.target) plan.target[i] = term.target(p);
            }
            for (const auto& piece : term.pieces) {
                PiecePlan pp;
                pp.pass = find_pass(term.set, piece.order > 0 ? piece.direction : -2);
                pp.order = piece.order;
                pp.factor = Eigen::ArrayXd::Constant(
                    plan.n, piece.coeff * detail::factorial(piece.order));
                if (piece.scale)
                    for (Eigen::Index i = 0; i < plan.n; ++i) {
                        const std::array<double, 2> p{pts(i, 0), pts(i, 1)};
                        pp.factor[i] *= piece.scale(p);
                    }
                plan.pieces.push_back(std::move(pp));
            }
            terms_.push_back(std::move(plan));
        }
    }

    // Full-batch loss; with_grad seeds per-term adjoints and accumulates the
    // parameter gradient (the gradient buffer is zeroed here).
    LossBreakdown loss(bool with_grad) {
        for (auto& p : flat_) p.tape->forward();

        LossBreakdown lb;
        for (auto& plan : terms_) {
            plan.resid = -plan.target;
            for (const auto& piece : plan.pieces) {
                const auto& pass = flat_[static_cast<std::size_t>(piece.pass)];
                plan.resid += piece.factor *
                              pass.tape->value(pass.out).c[static_cast<std::size_t>(piece.order)]
                                  .col(0);
            }
            lb.terms.push_back(plan.n > 0 ? plan.resid.square().mean() : 0.0);
            lb.weights.push_back(plan.weight);
        }
        lb.total = lb.recompute();

        if (with_grad) {
            grad_->setZero();
            for (auto& p : flat_) p.tape->zero_adjoints();
            for (auto& plan : terms_) {
                if (plan.weight == 0.0 || plan.n == 0) continue;
                const double s = 2.0 * plan.weight / static_cast<double>(plan.n);
                for (const auto& piece : plan.pieces) {
                    auto& pass = flat_[static_cast<std::size_t>(piece.pass)];
                    pass.tape->adjoint(pass.out).c[static_cast<std::size_t>(piece.order)].col(0) +=
                        s * plan.resid * piece.factor;
                }
            }
            for (auto& p : flat_) p.tape->backward();
        }
        return lb;
    }

  private:
    struct Pass {
        int set = 0, direction = -1, out = -1;
        std::unique_ptr<Tape> tape;
    };
    struct PiecePlan {
        int pass = 0, order = 0;
        Eigen::ArrayXd factor;
    };
    struct TermPlan {
        double weight = 1.0;
        Eigen::Index n = 0;
        std::vector<PiecePlan> pieces;
        Eigen::ArrayXd target, resid;
    };

    void add_pass(int set, int direction, int order, const Arr& points, const ModelConfig& cfg,
                  const ParamLayout& lay, const Eigen::VectorXd* theta, Eigen::VectorXd* grad) {
        Pass p;
        p.set = set;
        p.direction = direction;
        p.tape = std::make_unique<Tape>(theta, grad, points.rows(), order);
        p.out = build_forward(*p.tape, cfg, lay, p.tape->input(points, direction));
        grad_ = grad;
        passes_[static_cast<std::size_t>(set)].push_back(static_cast<int>(flat_.size()));
        flat_.push_back(std::move(p));
    }

    // direction -2: any pass of the set will do (order-0 reads).
    int find_pass(int set, int direction) const {
        const auto& ids = passes_[static_cast<std::size_t>(set)];
        if (ids.empty()) throw StructuralError("term references a set with no recorded pass");
        if (direction == -2) return ids.front();
        for (int id : ids)
            if (flat_[static_cast<std::size_t>(id)].direction == direction) return id;
        throw StructuralError("no pass recorded for the requested direction");
    }

    std::vector<std::vector<int>> passes_;  // set -> flat pass ids
    std::vector<Pass> flat_;
    std::vector<TermPlan> terms_;
    Eigen::VectorXd* grad_ = nullptr;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected first-order moments; deterministic given the gradient stream.
class Adam {
  public:
    explicit Adam(Eigen::Index n, AdamConfig cfg = {})
        : cfg_(cfg), m_(Eigen::ArrayXd::Zero(n)), v_(Eigen::ArrayXd::Zero(n)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
        if (grad.size() != theta.size() || theta.size() != m_.size())
            throw StructuralError("gradient length does not match parameters");
        if (!grad.allFinite())
            throw ModelFault("non-finite gradient at step " + std::to_string(t_ + 1));
        ++t_;
        const Eigen::ArrayXd g = grad.array();
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.square();
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        theta.array() -= cfg_.lr * (m_ / c1) / ((v_ / c2).sqrt() + cfg_.eps);
    }

    std::int64_t steps() const { return t_; }

  private:
    AdamConfig cfg_;
    Eigen::ArrayXd m_, v_;
    std::int64_t t_ = 0;
};

struct TrainConfig {
    ModelConfig model;
    AdamConfig adam;
    LossWeights weights;
    int budget = 20000;
    std::uint64_t seed = 1;
    Eigen::VectorXd theta0;  // empty: seeded initialization
};

struct RunRecord {
    std::string problem, model_tag;
    ModelConfig model;
    AdamConfig adam;
    std::uint64_t seed = 0;
    std::uint64_t set_fingerprint = 0;
    Eigen::Index param_count = 0;
    int budget = 0;
    std::vector<LossBreakdown> history;
    Eigen::VectorXd theta;
    double wall_seconds = 0.0;
    bool aborted = false;
    int abort_step = -1;
};

inline std::string model_tag(const ModelConfig& cfg) {
    return cfg.arch == Arch::XLstm ? "xlstm" : "baseline";
}

// Fixed collocation sets, full-batch steps; a non-finite loss or gradient
// aborts the run and restores the last parameters with a finite loss.
inline RunRecord train(const ProblemSpec& spec_in, const TrainConfig& cfg) {
    if (cfg.budget < 1) throw ConfigError("budget must be >= 1");
    ProblemSpec spec = spec_in;
    cfg.weights.apply(spec);

    RunRecord rec;
    rec.problem = spec.name;
    rec.model_tag = model_tag(cfg.model);
    rec.model = cfg.model;
    rec.adam = cfg.adam;
    rec.seed = cfg.seed;
    rec.budget = cfg.budget;

    const ParamLayout lay = ParamLayout::build(cfg.model);
    rec.param_count = lay.total;

    const SampleSets sets = sample(spec, cfg.seed);
    rec.set_fingerprint = sets.fingerprint;

    Eigen::VectorXd theta;
    if (cfg.theta0.size() > 0) {
        if (cfg.theta0.size() != lay.total) throw ConfigError("theta0 length mismatch");
        theta = cfg.theta0;
    } else {
        theta = init_params(cfg.model, derive_seed(cfg.seed, rec.model_tag + "/init"));
    }
    Eigen::VectorXd grad(lay.total);

    TrainingGraph graph(spec, sets, cfg.model, lay, &theta, &grad);
    Adam opt(lay.total, cfg.adam);
    Eigen::VectorXd last_good = theta;

    const auto t0 = std::chrono::steady_clock::now();
    for (int it = 0; it < cfg.budget; ++it) {
        LossBreakdown lb;
        bool finite = true;
        try {
            lb = graph.loss(true);
            finite = std::isfinite(lb.total);
        } catch (const ModelFault&) {
            finite = false;
        } catch (const DomainError&) {
            finite = false;
        }
        if (!finite) {
            rec.aborted = true;
            rec.abort_step = it;
            theta = last_good;
            break;
        }
        lb.iteration = it;
        rec.history.push_back(std::move(lb));
        last_good = theta;
        try {
            opt.step(theta, grad);
        } catch (const ModelFault&) {
            rec.aborted = true;
            rec.abort_step = it;
            theta = last_good;
            break;
        }
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.theta = std::move(theta);
    return rec;
}

struct PairedRuns {
    RunRecord xlstm, baseline;
};

// Same seed, same collocation sets, parameter counts within 2%.
inline PairedRuns train_pair(const ProblemSpec& spec, const TrainConfig& cfg) {
    TrainConfig xc = cfg;
    xc.model.arch = Arch::XLstm;
    xc.theta0.resize(0);
    TrainConfig bc = xc;
    bc.model = matched_baseline(xc.model);

    PairedRuns out{train(spec, xc), train(spec, bc)};
    if (out.xlstm.set_fingerprint != out.baseline.set_fingerprint)
        throw StructuralError("paired runs drew different collocation sets");
    const double rel = std::abs(static_cast<double>(out.xlstm.param_count) -
                                static_cast<double>(out.baseline.param_count)) /
                       static_cast<double>(out.xlstm.param_count);
    if (rel > 0.02)
        throw ConfigError("no baseline width matches the parameter count within 2%");
    return out;
}

}  // namespace pinn
