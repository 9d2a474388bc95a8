#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "pinn/common.hpp"
#include "pinn/model.hpp"
#include "pinn/problems.hpp"

namespace pinn {

struct MetricRecord {
    std::string problem, model_tag, grid;
    double mse = 0.0, rmse = 0.0, mae = 0.0, maxae = 0.0;
};

inline MetricRecord metrics(const Eigen::ArrayXd& predicted, const Eigen::ArrayXd& reference,
                            std::string problem, std::string model_tag, std::string grid) {
    if (predicted.size() == 0 || predicted.size() != reference.size())
        throw StructuralError("metric inputs must be nonempty and aligned");
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        if (!std::isfinite(predicted[i]))
            throw ModelFault("non-finite prediction at grid point " + std::to_string(i));
        if (!std::isfinite(reference[i]))
            throw ModelFault("non-finite reference at grid point " + std::to_string(i));
    }
    MetricRecord r;
    r.problem = std::move(problem);
    r.model_tag = std::move(model_tag);
    r.grid = std::move(grid);
    const Eigen::ArrayXd diff = predicted - reference;
    r.mse = diff.square().mean();
    r.rmse = std::sqrt(r.mse);
    r.mae = diff.abs().mean();
    r.maxae = diff.abs().maxCoeff();
    return r;
}

inline std::string grid_descriptor(const ProblemSpec& spec) {
    return std::to_string(spec.grid_nx) + "x" + std::to_string(spec.grid_ny) +
           (spec.grid_kind == GridKind::Polar ? " polar" : "");
}

// Model error against the analytic reference on the problem's validation grid.
inline MetricRecord validation_metrics(const ProblemSpec& spec, const ModelConfig& cfg,
                                       const ParamLayout& lay, const Eigen::VectorXd& theta,
                                       const std::string& model_tag) {
    const Arr grid = validation_grid(spec);
    Eigen::ArrayXd ref(grid.rows());
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        const std::array<double, 2> p{grid(i, 0), grid(i, 1)};
        ref[i] = spec.reference(p);
    }
    const Eigen::ArrayXd pred = forward_batch(cfg, lay, theta, grid);
    return metrics(pred, ref, spec.name, model_tag, grid_descriptor(spec));
}

}  // namespace pinn
