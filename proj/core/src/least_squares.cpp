#include "mvskel/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace mvskel {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

double squared_norm_cost(const Eigen::VectorXd& r) { return r.squaredNorm(); }

}  // namespace

void LsqOptions::validate() const {
    if (max_iterations < 1) throw std::invalid_argument("LsqOptions: max_iterations < 1");
    if (cost_tolerance < 0.0) throw std::invalid_argument("LsqOptions: cost_tolerance < 0");
    if (param_tolerance < 0.0) throw std::invalid_argument("LsqOptions: param_tolerance < 0");
    if (initial_damping <= 0.0) throw std::invalid_argument("LsqOptions: initial_damping <= 0");
    if (damping_up <= 1.0) throw std::invalid_argument("LsqOptions: damping_up <= 1");
    if (damping_down <= 0.0 || damping_down >= 1.0)
        throw std::invalid_argument("LsqOptions: damping_down outside (0,1)");
    if (jacobian_eps <= 0.0) throw std::invalid_argument("LsqOptions: jacobian_eps <= 0");
}

const char* to_string(LsqTermination reason) {
    switch (reason) {
        case LsqTermination::CostTolerance: return "cost_tolerance";
        case LsqTermination::ParamTolerance: return "param_tolerance";
        case LsqTermination::MaxIterations: return "max_iterations";
        case LsqTermination::Stalled: return "stalled";
    }
    return "unknown";
}

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residual_fn, const Eigen::VectorXd& params,
                                 double eps) {
    if (eps <= 0.0) throw std::invalid_argument("numeric_jacobian: eps <= 0");
    const Eigen::Index n = params.size();
    Eigen::VectorXd probe = params;
    Eigen::MatrixXd jac;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = eps * std::max(1.0, std::abs(params[j]));
        probe[j] = params[j] + h;
        const Eigen::VectorXd forward = residual_fn(probe);
        probe[j] = params[j] - h;
        const Eigen::VectorXd backward = residual_fn(probe);
        probe[j] = params[j];
        if (!all_finite(forward) || !all_finite(backward))
            throw std::runtime_error("numeric_jacobian: non-finite residual");
        if (forward.size() != backward.size())
            throw std::runtime_error("numeric_jacobian: residual dimension changed");
        if (jac.size() == 0) jac.resize(forward.size(), n);
        if (forward.size() != jac.rows())
            throw std::runtime_error("numeric_jacobian: residual dimension changed");
        jac.col(j) = (forward - backward) / (2.0 * h);
    }
    if (jac.size() == 0) jac.resize(residual_fn(params).size(), 0);
    return jac;
}

LsqReport solve_least_squares(const ResidualFn& residual_fn, const Eigen::VectorXd& initial,
                              const LsqOptions& opts) {
    opts.validate();

    LsqReport report;
    report.final_params = initial;

    Eigen::VectorXd params = initial;
    Eigen::VectorXd residual = residual_fn(params);
    if (!all_finite(residual))
        throw std::runtime_error("solve_least_squares: non-finite residual at initial point");
    double cost = squared_norm_cost(residual);

    report.final_cost = cost;
    if (cost == 0.0 || params.size() == 0) {
        report.converged = true;
        report.termination_reason = LsqTermination::CostTolerance;
        return report;
    }

    double damping = opts.initial_damping;
    // Damping beyond this is numerically a zero step; treat as a stall.
    constexpr double kMaxDamping = 1e32;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        const Eigen::MatrixXd jac = numeric_jacobian(residual_fn, params, opts.jacobian_eps);
        const Eigen::MatrixXd hessian = jac.transpose() * jac;
        const Eigen::VectorXd gradient = jac.transpose() * residual;
        // Guard zero diagonal entries so damping still regularises dead columns.
        Eigen::VectorXd diag = hessian.diagonal();
        for (Eigen::Index i = 0; i < diag.size(); ++i)
            if (diag[i] <= 0.0) diag[i] = 1.0;

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = hessian;
            damped.diagonal() += damping * diag;
            const Eigen::LLT<Eigen::MatrixXd> llt(damped);
            if (llt.info() == Eigen::Success) {
                const Eigen::VectorXd step = llt.solve(-gradient);
                const Eigen::VectorXd trial = params + step;
                const Eigen::VectorXd trial_residual = residual_fn(trial);
                const double trial_cost = all_finite(trial_residual)
                                              ? squared_norm_cost(trial_residual)
                                              : std::numeric_limits<double>::infinity();
                if (trial_cost < cost) {
                    const double cost_drop = cost - trial_cost;
                    const double step_norm = step.norm();
                    const double param_scale = params.norm();

                    params = trial;
                    residual = trial_residual;
                    cost = trial_cost;
                    damping = std::max(damping * opts.damping_down, 1e-18);
                    accepted = true;

                    report.final_params = params;
                    report.final_cost = cost;
                    report.iterations = iter + 1;

                    if (cost == 0.0 || cost_drop <= opts.cost_tolerance * std::max(1.0, cost)) {
                        report.converged = true;
                        report.termination_reason = LsqTermination::CostTolerance;
                        return report;
                    }
                    if (step_norm <= opts.param_tolerance * std::max(1.0, param_scale)) {
                        report.converged = true;
                        report.termination_reason = LsqTermination::ParamTolerance;
                        return report;
                    }
                }
            }
            if (!accepted) {
                damping *= opts.damping_up;
                if (damping > kMaxDamping) {
                    report.converged = true;
                    report.termination_reason = LsqTermination::Stalled;
                    return report;
                }
            }
        }
    }

    report.converged = false;
    report.termination_reason = LsqTermination::MaxIterations;
    return report;
}

}  // namespace mvskel
