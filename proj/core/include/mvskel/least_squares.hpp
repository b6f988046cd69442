#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

namespace mvskel {

/// Maps a parameter vector to a residual vector. Must be reentrant and return
/// the same residual dimension for every input.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LsqOptions {
    int max_iterations = 200;
    double cost_tolerance = 1e-10;   // relative decrease of the accepted cost
    double param_tolerance = 1e-10;  // step norm relative to parameter norm
    double initial_damping = 1e-3;
    double damping_up = 10.0;    // multiplier after a rejected step
    double damping_down = 0.1;   // multiplier after an accepted step
    double jacobian_eps = 1e-6;  // central-difference step, relative

    void validate() const;
};

enum class LsqTermination {
    CostTolerance,
    ParamTolerance,
    MaxIterations,
    Stalled,  // damping escalation exhausted without an acceptable step
};

const char* to_string(LsqTermination reason);

struct LsqReport {
    Eigen::VectorXd final_params;
    double final_cost = 0.0;  // sum of squared residuals
    int iterations = 0;       // accepted steps
    bool converged = false;
    LsqTermination termination_reason = LsqTermination::MaxIterations;
};

/// Central-difference Jacobian,
///   J(i,j) = (r_i(x + h_j e_j) - r_i(x - h_j e_j)) / (2 h_j),
/// with h_j = eps * max(1, |x_j|). Throws std::runtime_error if the residual
/// is non-finite at any evaluation point.
Eigen::MatrixXd numeric_jacobian(const ResidualFn& residual_fn, const Eigen::VectorXd& params,
                                 double eps = 1e-6);

/// Dense Levenberg-Marquardt over numeric Jacobians. Damping is added to the
/// scaled diagonal of the normal equations (J^T J + lambda diag(J^T J)), so
/// mixed-scale parameter vectors stay well conditioned. The accepted-cost
/// sequence is non-increasing; damping grows by damping_up on every rejected
/// trial step and shrinks by damping_down on acceptance. Cholesky failures
/// escalate damping instead of aborting.
/// Throws std::runtime_error when the residual is non-finite at the initial
/// point.
LsqReport solve_least_squares(const ResidualFn& residual_fn, const Eigen::VectorXd& initial,
                              const LsqOptions& opts = {});

}  // namespace mvskel
