#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "netdyn/expression.hpp"
#include "netdyn/symreg.hpp"

namespace netdyn {

/// Coefficient of determination with the per-time mean of the truth as the
/// reference; rows are nodes (or node-dimensions), columns are times.
double r2_score(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

/// Per-node normalised Euclidean distance between (state, derivative)
/// trajectories; each node is normalised by the diameter of its own true
/// (state, derivative) point set. Arrays are laid out (time, node, dim).
std::vector<double> ned_score(const std::vector<double>& x_true,
                              const std::vector<double>& x_pred,
                              const std::vector<double>& dx_true,
                              const std::vector<double>& dx_pred, size_t T, int n, int d);

struct RecallPrecision {
    double recall = 0.0;
    std::optional<double> precision;  // undefined when the predicted support is empty
};

RecallPrecision recall_precision(const Eigen::VectorXd& xi_true, const Eigen::VectorXd& xi_pred);

double l2_coeff_error(const Eigen::VectorXd& xi_true, const Eigen::VectorXd& xi_pred);

struct MreMae {
    double mre = 0.0;
    double mae = 0.0;
    size_t excluded_zeros = 0;  // truth entries skipped by the relative error
};

MreMae mre_mae(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

double mse_score(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

/// Least-squares projection of an expression onto a reference library over a
/// seeded sample grid. Coefficients below zero_tol are zeroed; a relative
/// residual above residual_tol marks terms outside the library span.
struct CoeffProjection {
    Eigen::VectorXd xi;
    double relative_residual = 0.0;
    bool other_terms = false;
};

CoeffProjection project_on_library(const Expression& expr, const FunctionLibrary& library,
                                   const Eigen::MatrixXd& samples, double zero_tol = 1e-3,
                                   double residual_tol = 1e-6);

/// Recall/precision between expressions via library projection; unmatched
/// residual terms occupy an extra slot and count against precision.
RecallPrecision expression_recall_precision(const Eigen::VectorXd& xi_true,
                                            const CoeffProjection& pred);

struct MetricsReport {
    double r2 = 0.0;
    double mse = 0.0;
    double mre = 0.0;
    double mae = 0.0;
    size_t mre_excluded_zeros = 0;
    std::optional<double> l2_error;
    std::optional<double> recall;
    std::optional<double> precision;
    std::vector<double> ned;  // per node

    std::string to_json() const;
};

void save_ned_csv(const std::vector<double>& ned, const std::string& path);

}  // namespace netdyn
