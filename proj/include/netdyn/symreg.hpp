#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netdyn/decoupler.hpp"
#include "netdyn/dynamics.hpp"
#include "netdyn/expression.hpp"
#include "netdyn/preprocess.hpp"
#include "netdyn/topology.hpp"

namespace netdyn {

// ---------------------------------------------------------------------------
// K-means representative sampling
// ---------------------------------------------------------------------------

/// k-means++ seeded Lloyd iteration; returns the data point nearest each
/// centroid, so outputs are actual samples.
std::vector<int> kmeans_sample_indices(const Eigen::MatrixXd& points, int k, uint64_t seed);
Eigen::MatrixXd kmeans_sample(const Eigen::MatrixXd& points, int k, uint64_t seed);

// ---------------------------------------------------------------------------
// Library-based sparse regression (sequentially thresholded least squares)
// ---------------------------------------------------------------------------

struct FunctionLibrary {
    std::vector<Expression> basis;
    std::vector<std::string> names;

    size_t size() const { return basis.size(); }
    static FunctionLibrary from_infix(const std::vector<std::string>& lines, int num_vars = -1);
    static FunctionLibrary from_file(const std::string& path, int num_vars = -1);
    /// All monomials of the given variables up to the requested degree.
    static FunctionLibrary polynomial(int num_vars, int degree);

    Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& inputs) const;
    /// Linear combination with coefficients below prune_tol dropped.
    Expression combination(const Eigen::VectorXd& xi, double prune_tol = 0.0) const;
};

Eigen::VectorXd sparse_regress(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                               const FunctionLibrary& library, double threshold,
                               int max_iters = 20);

// ---------------------------------------------------------------------------
// Expression search (population-based, replaces the pre-trained model)
// ---------------------------------------------------------------------------

struct SearchConfig {
    std::vector<Op> operators = {Op::Add, Op::Sub, Op::Mul, Op::Div,
                                 Op::Pow, Op::Exp, Op::Sin, Op::Cos};
    int max_depth = 5;
    int population = 400;
    int iters = 40;           // generations
    uint64_t seed = 0;
    double parsimony = 1e-3;  // complexity penalty per node
    int elite_refine = 8;     // constant-fit the best candidates per generation
    double const_prune = 1e-3;
};

struct ScoredExpression {
    Expression expr;
    double error = 0.0;  // mean squared error on the samples
    int size = 0;
    double score = 0.0;  // error + parsimony * size
};

/// Pareto front over (error, size), best score first. Never empty: a constant
/// expression is always admissible.
std::vector<ScoredExpression> search_regress(const Eigen::MatrixXd& inputs,
                                             const Eigen::VectorXd& outputs,
                                             const SearchConfig& cfg);

/// BFGS refinement of the numeric constants; several random restarts, best
/// kept. Expressions without constants are returned unchanged.
Expression fit_constants(const Expression& expr, const Eigen::MatrixXd& inputs,
                         const Eigen::VectorXd& outputs, uint64_t seed = 0, int restarts = 8);

double expression_mse(const Expression& expr, const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd& outputs);

// ---------------------------------------------------------------------------
// Turning a trained decoupler into closed-form node dynamics
// ---------------------------------------------------------------------------

struct SamplingConfig {
    int n_raw = 10000;
    int k = 512;
    uint64_t seed = 0;
};

struct BackendConfig {
    enum class Kind { Sparse, Search } kind = Kind::Search;
    FunctionLibrary self_library;   // sparse backend
    FunctionLibrary inter_library;
    double threshold = 0.05;
    double threshold_inter = -1.0;  // < 0: same as threshold
    int stlsq_max_iters = 20;
    SearchConfig search;
    double const_prune = 1e-3;
};

struct ExpressionInfo {
    Expression expr;
    double fit_error = 0.0;
    int complexity = 0;
    std::vector<double> coefficients;  // sparse backend only, aligned to the library
};

struct DiscoveredModel {
    int d = 0;
    std::vector<std::vector<ExpressionInfo>> self_exprs;   // [node type][dim]
    std::vector<std::vector<ExpressionInfo>> inter_exprs;  // [edge type][dim]
    std::string backend;
    uint64_t seed = 0;
    std::vector<std::string> self_library_names;  // provenance, sparse backend
    std::vector<std::string> inter_library_names;

    std::string to_json() const;
    static DiscoveredModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static DiscoveredModel load(const std::string& path);
};

DiscoveredModel regress_decoupler(const DecouplerModel& model, const TrainingSet& ts,
                                  const Topology& topo, const SamplingConfig& sampling,
                                  const BackendConfig& backend);

/// Node-wise RHS assembled from the discovered expressions; integrable by
/// integrate_ivp. Self expressions read x_i, interaction expressions read
/// (x_i, x_j) concatenated.
RhsFn assemble_rhs(const DiscoveredModel& dm, const Topology& topo);

}  // namespace netdyn
