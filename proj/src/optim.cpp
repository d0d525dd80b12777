#include "netdyn/optim.hpp"

#include <cmath>
#include <limits>

namespace netdyn {

namespace {

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (int i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
        probe(i) = x(i) + h;
        const double fp = f(probe);
        probe(i) = x(i) - h;
        const double fm = f(probe);
        probe(i) = x(i);
        g(i) = (fp - fm) / (2 * h);
    }
    return g;
}

}  // namespace

BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x0,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                         int max_iters, double grad_tol) {
    const int n = int(x0.size());
    auto gradient = [&](const Eigen::VectorXd& x) { return grad ? grad(x) : fd_gradient(f, x); };

    BfgsResult res;
    res.x = x0;
    res.fval = f(res.x);
    if (!std::isfinite(res.fval)) return res;
    if (n == 0) {
        res.converged = true;
        return res;
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = gradient(res.x);

    for (int it = 0; it < max_iters; ++it) {
        res.iterations = it;
        if (!g.allFinite()) break;
        if (g.norm() < grad_tol) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd p = -H * g;
        double descent = g.dot(p);
        if (descent >= 0) {  // reset on a bad direction
            H.setIdentity();
            p = -g;
            descent = g.dot(p);
        }
        // backtracking Armijo
        double alpha = 1.0;
        const double c1 = 1e-4;
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = res.x + alpha * p;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= res.fval + c1 * alpha * descent) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        Eigen::VectorXd g_new = gradient(x_new);
        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && y.allFinite()) {
            const double rho = 1.0 / sy;
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
                rho * s * s.transpose();
        }
        const double improvement = res.fval - f_new;
        res.x = x_new;
        res.fval = f_new;
        g = g_new;
        if (improvement < 1e-15 * std::max(1.0, std::abs(res.fval))) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace netdyn
