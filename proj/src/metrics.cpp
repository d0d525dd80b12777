#include "netdyn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "netdyn/common.hpp"
#include "json.hpp"

namespace netdyn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double r2_score(const MatrixXd& truth, const MatrixXd& pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw ConfigError("r2_score: shape mismatch");
    double ss_res = 0.0, ss_tot = 0.0;
    for (Eigen::Index t = 0; t < truth.cols(); ++t) {
        const double mean = truth.col(t).mean();
        ss_res += (truth.col(t) - pred.col(t)).squaredNorm();
        ss_tot += (truth.col(t).array() - mean).square().sum();
    }
    if (ss_tot == 0.0) throw ConfigError("r2_score: constant truth (SS_tot = 0)");
    return 1.0 - ss_res / ss_tot;
}

std::vector<double> ned_score(const std::vector<double>& x_true,
                              const std::vector<double>& x_pred,
                              const std::vector<double>& dx_true,
                              const std::vector<double>& dx_pred, size_t T, int n, int d) {
    const size_t expect = T * size_t(n) * d;
    if (x_true.size() != expect || x_pred.size() != expect || dx_true.size() != expect ||
        dx_pred.size() != expect)
        throw ConfigError("ned_score: trajectories not aligned");
    std::vector<double> out(n, 0.0);
    std::vector<double> pt(2 * d);
    for (int i = 0; i < n; ++i) {
        // diameter of the node's true (state, derivative) point set
        std::vector<std::vector<double>> pts(T, std::vector<double>(2 * d));
        for (size_t t = 0; t < T; ++t)
            for (int k = 0; k < d; ++k) {
                pts[t][k] = x_true[(t * n + i) * d + k];
                pts[t][d + k] = dx_true[(t * n + i) * d + k];
            }
        double dmax = 0.0;
        for (size_t a = 0; a < T; ++a)
            for (size_t b = a + 1; b < T; ++b) {
                double s = 0.0;
                for (int k = 0; k < 2 * d; ++k) {
                    const double diff = pts[a][k] - pts[b][k];
                    s += diff * diff;
                }
                dmax = std::max(dmax, s);
            }
        dmax = std::sqrt(dmax);
        if (dmax == 0.0) throw ConfigError("ned_score: all-identical truth states (D_max = 0)");
        double acc = 0.0;
        for (size_t t = 0; t < T; ++t) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) {
                const double ex = x_true[(t * n + i) * d + k] - x_pred[(t * n + i) * d + k];
                const double ed = dx_true[(t * n + i) * d + k] - dx_pred[(t * n + i) * d + k];
                s += ex * ex + ed * ed;
            }
            acc += std::sqrt(s);
        }
        out[i] = acc / dmax;
    }
    return out;
}

RecallPrecision recall_precision(const VectorXd& xi_true, const VectorXd& xi_pred) {
    if (xi_true.size() != xi_pred.size())
        throw ConfigError("recall_precision: length mismatch");
    int true_nz = 0, pred_nz = 0, both_nz = 0;
    for (Eigen::Index k = 0; k < xi_true.size(); ++k) {
        const bool t = xi_true(k) != 0.0, p = xi_pred(k) != 0.0;
        true_nz += t;
        pred_nz += p;
        both_nz += t && p;
    }
    if (true_nz == 0) throw ConfigError("recall_precision: true support is empty");
    RecallPrecision rp;
    rp.recall = double(both_nz) / true_nz;
    if (pred_nz > 0) rp.precision = double(both_nz) / pred_nz;
    return rp;
}

double l2_coeff_error(const VectorXd& xi_true, const VectorXd& xi_pred) {
    if (xi_true.size() != xi_pred.size()) throw ConfigError("l2_coeff_error: length mismatch");
    const double denom = xi_true.norm();
    if (denom == 0.0) throw ConfigError("l2_coeff_error: zero true norm");
    return (xi_pred - xi_true).norm() / denom;
}

MreMae mre_mae(const MatrixXd& truth, const MatrixXd& pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw ConfigError("mre_mae: shape mismatch");
    MreMae out;
    double sre = 0.0, sae = 0.0;
    size_t total = truth.size(), rel_count = 0;
    for (Eigen::Index i = 0; i < truth.rows(); ++i)
        for (Eigen::Index t = 0; t < truth.cols(); ++t) {
            const double err = std::abs(truth(i, t) - pred(i, t));
            sae += err;
            if (truth(i, t) != 0.0) {
                sre += err / std::abs(truth(i, t));
                ++rel_count;
            } else {
                ++out.excluded_zeros;
            }
        }
    out.mae = sae / double(total);
    out.mre = rel_count > 0 ? sre / double(rel_count) : 0.0;
    return out;
}

double mse_score(const MatrixXd& truth, const MatrixXd& pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw ConfigError("mse_score: shape mismatch");
    return (truth - pred).squaredNorm() / double(truth.size());
}

CoeffProjection project_on_library(const Expression& expr, const FunctionLibrary& library,
                                   const MatrixXd& samples, double zero_tol,
                                   double residual_tol) {
    MatrixXd theta = library.design_matrix(samples);
    VectorXd y(samples.rows());
    CompiledExpression ce(expr);
    std::vector<double> vars(samples.cols());
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < samples.cols(); ++c) vars[c] = samples(r, c);
        y(r) = ce.eval_checked(vars.data());
    }
    CoeffProjection proj;
    proj.xi = theta.colPivHouseholderQr().solve(y);
    const double y_scale = std::max(1.0, y.norm());
    proj.relative_residual = (theta * proj.xi - y).norm() / y_scale;
    for (Eigen::Index k = 0; k < proj.xi.size(); ++k)
        if (std::abs(proj.xi(k)) < zero_tol) proj.xi(k) = 0.0;
    proj.other_terms = proj.relative_residual > residual_tol;
    return proj;
}

RecallPrecision expression_recall_precision(const VectorXd& xi_true,
                                            const CoeffProjection& pred) {
    VectorXd t(xi_true.size() + 1), p(xi_true.size() + 1);
    t << xi_true, 0.0;
    p << pred.xi, pred.other_terms ? 1.0 : 0.0;
    return recall_precision(t, p);
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["r2"] = r2;
    j["mse"] = mse;
    j["mre"] = mre;
    j["mae"] = mae;
    j["mre_excluded_zeros"] = mre_excluded_zeros;
    if (l2_error) j["l2_error"] = *l2_error;
    if (recall) j["recall"] = *recall;
    if (precision) j["precision"] = *precision;
    j["ned"] = ned;
    return j.dump(2);
}

void save_ned_csv(const std::vector<double>& ned, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_ned_csv: cannot write " + path);
    out << "node,ned\n";
    char buf[48];
    for (size_t i = 0; i < ned.size(); ++i) {
        snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ned[i]);
        out << buf;
    }
}

}  // namespace netdyn
