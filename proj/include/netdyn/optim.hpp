#pragma once

#include <Eigen/Dense>
#include <functional>

namespace netdyn {

struct BfgsResult {
    Eigen::VectorXd x;
    double fval = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Quasi-Newton minimisation with inverse-Hessian updates and a backtracking
/// Armijo line search. The gradient callback may be empty, in which case
/// central finite differences are used.
BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x0,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad = {},
                         int max_iters = 200, double grad_tol = 1e-10);

}  // namespace netdyn
