#include "netdyn/symreg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "netdyn/common.hpp"
#include "netdyn/optim.hpp"
#include "json.hpp"

namespace netdyn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// K-means sampling
// ---------------------------------------------------------------------------

std::vector<int> kmeans_sample_indices(const MatrixXd& points, int k, uint64_t seed) {
    const int n = int(points.rows());
    if (k < 1) throw ConfigError("kmeans_sample: k must be >= 1");
    // distinct-point count gate
    std::set<std::vector<double>> distinct;
    for (int i = 0; i < n && int(distinct.size()) < k; ++i)
        distinct.insert(std::vector<double>(points.row(i).data(),
                                            points.row(i).data() + points.cols()));
    if (int(distinct.size()) < k)
        throw ConfigError("kmeans_sample: k exceeds number of distinct points");

    Rng rng(seed);
    MatrixXd centroids(k, points.cols());
    VectorXd d2 = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    // k-means++ seeding
    int first = int(uniform01(rng) * n);
    centroids.row(0) = points.row(first);
    for (int c = 1; c < k; ++c) {
        for (int i = 0; i < n; ++i)
            d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c - 1)).squaredNorm());
        double total = d2.sum();
        int pick = 0;
        if (total > 0) {
            double r = uniform01(rng) * total, acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = int(uniform01(rng) * n);
        }
        centroids.row(c) = points.row(pick);
    }

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dd = (points.row(i) - centroids.row(c)).squaredNorm();
                if (dd < best) {
                    best = dd;
                    assign[i] = c;
                }
            }
        }
        MatrixXd next = MatrixXd::Zero(k, points.cols());
        VectorXd counts = VectorXd::Zero(k);
        for (int i = 0; i < n; ++i) {
            next.row(assign[i]) += points.row(i);
            counts(assign[i]) += 1;
        }
        double shift = 0;
        for (int c = 0; c < k; ++c) {
            if (counts(c) > 0) next.row(c) /= counts(c);
            else next.row(c) = centroids.row(c);  // empty cluster keeps its centroid
            shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
        }
        centroids = next;
        if (shift < 1e-9) break;
    }

    // representative = data point nearest each centroid
    std::vector<int> reps(k);
    for (int c = 0; c < k; ++c) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double dd = (points.row(i) - centroids.row(c)).squaredNorm();
            if (dd < best) {
                best = dd;
                reps[c] = i;
            }
        }
    }
    return reps;
}

MatrixXd kmeans_sample(const MatrixXd& points, int k, uint64_t seed) {
    auto idx = kmeans_sample_indices(points, k, seed);
    MatrixXd out(k, points.cols());
    for (int c = 0; c < k; ++c) out.row(c) = points.row(idx[c]);
    return out;
}

// ---------------------------------------------------------------------------
// Function library + STLSQ
// ---------------------------------------------------------------------------

FunctionLibrary FunctionLibrary::from_infix(const std::vector<std::string>& lines, int num_vars) {
    FunctionLibrary lib;
    for (const auto& line : lines) {
        if (line.empty()) continue;
        lib.basis.push_back(parse_infix(line, num_vars));
        lib.names.push_back(line);
    }
    if (lib.basis.empty()) throw ConfigError("function library: empty");
    return lib;
}

FunctionLibrary FunctionLibrary::from_file(const std::string& path, int num_vars) {
    std::ifstream in(path);
    if (!in) throw ConfigError("function library: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') lines.push_back(line);
    return from_infix(lines, num_vars);
}

FunctionLibrary FunctionLibrary::polynomial(int num_vars, int degree) {
    FunctionLibrary lib;
    std::vector<int> expo(num_vars, 0);
    // exponent tuples ordered by total degree, lexicographic within a degree
    for (int deg = 0; deg <= degree; ++deg) {
        std::function<void(int, int)> enumerate = [&](int var, int remaining) {
            if (var == num_vars) {
                if (remaining != 0) return;
                int total = 0;
                for (int v = 0; v < num_vars; ++v) total += expo[v];
                if (total == 0) {
                    lib.basis.push_back(Expression::constant(1.0));
                    lib.names.push_back("1");
                    return;
                }
                Expression term = Expression::constant(1.0);
                std::string name;
                bool started = false;
                for (int v = 0; v < num_vars; ++v)
                    for (int e = 0; e < expo[v]; ++e) {
                        term = started ? Expression::binary(Op::Mul, std::move(term),
                                                            Expression::variable(v))
                                       : Expression::variable(v);
                        name += (started ? "*" : "") + ("x" + std::to_string(v + 1));
                        started = true;
                    }
                lib.basis.push_back(term);
                lib.names.push_back(name);
                return;
            }
            for (int e = remaining; e >= 0; --e) {
                expo[var] = e;
                enumerate(var + 1, remaining - e);
            }
            expo[var] = 0;
        };
        enumerate(0, deg);
    }
    return lib;
}

MatrixXd FunctionLibrary::design_matrix(const MatrixXd& inputs) const {
    MatrixXd theta(inputs.rows(), basis.size());
    std::vector<CompiledExpression> compiled;
    for (const auto& b : basis) compiled.emplace_back(b);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        const double* row = inputs.row(r).data();
        // rows of MatrixXd are not contiguous; copy once
        std::vector<double> vars(inputs.cols());
        for (Eigen::Index c = 0; c < inputs.cols(); ++c) vars[c] = inputs(r, c);
        for (size_t m = 0; m < compiled.size(); ++m) {
            double v;
            if (!compiled[m].eval(vars.data(), v))
                throw EvalError("function library: basis '" + names[m] +
                                "' undefined on sample " + std::to_string(r));
            theta(r, m) = v;
        }
        (void)row;
    }
    return theta;
}

Expression FunctionLibrary::combination(const VectorXd& xi, double prune_tol) const {
    Expression acc = Expression::constant(0.0);
    bool started = false;
    for (int m = 0; m < xi.size(); ++m) {
        if (std::abs(xi(m)) <= prune_tol || xi(m) == 0.0) continue;
        Expression term = Expression::binary(Op::Mul, Expression::constant(xi(m)), basis[m]);
        acc = started ? Expression::binary(Op::Add, std::move(acc), std::move(term))
                      : std::move(term);
        started = true;
    }
    return simplify(acc);
}

VectorXd sparse_regress(const MatrixXd& inputs, const VectorXd& outputs,
                        const FunctionLibrary& library, double threshold, int max_iters) {
    const int p = int(library.size());
    if (inputs.rows() < p)
        throw ConfigError("sparse_regress: need at least |library| samples");
    if (inputs.rows() != outputs.size())
        throw ConfigError("sparse_regress: inputs/outputs size mismatch");
    MatrixXd theta = library.design_matrix(inputs);

    std::vector<int> active(p);
    std::iota(active.begin(), active.end(), 0);
    VectorXd xi = VectorXd::Zero(p);
    for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
        MatrixXd sub(theta.rows(), active.size());
        for (size_t c = 0; c < active.size(); ++c) sub.col(c) = theta.col(active[c]);
        Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
        if (qr.rank() < int(active.size()))
            throw StageError("sparse_regress: design matrix rank-deficient "
                             "(library collinear on samples)");
        VectorXd beta = qr.solve(outputs);
        xi.setZero();
        std::vector<int> next;
        for (size_t c = 0; c < active.size(); ++c) {
            if (std::abs(beta(c)) >= threshold) {
                next.push_back(active[c]);
                xi(active[c]) = beta(c);
            }
        }
        if (next.empty()) return VectorXd::Zero(p);
        if (next == active) break;
        active = next;
    }
    return xi;
}

// ---------------------------------------------------------------------------
// Constant fitting
// ---------------------------------------------------------------------------

double expression_mse(const Expression& expr, const MatrixXd& inputs, const VectorXd& outputs) {
    CompiledExpression ce(expr);
    double sse = 0;
    std::vector<double> vars(inputs.cols());
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < inputs.cols(); ++c) vars[c] = inputs(r, c);
        double v;
        if (!ce.eval(vars.data(), v)) return std::numeric_limits<double>::infinity();
        const double e = v - outputs(r);
        sse += e * e;
    }
    return sse / double(inputs.rows());
}

Expression fit_constants(const Expression& expr, const MatrixXd& inputs,
                         const VectorXd& outputs, uint64_t seed, int restarts) {
    Expression work = expr;
    auto slots = work.constant_slots();
    if (slots.empty()) return expr;
    const int nc = int(slots.size());

    VectorXd c0(nc);
    for (int i = 0; i < nc; ++i) c0(i) = *slots[i];

    auto objective = [&](const VectorXd& c) {
        for (int i = 0; i < nc; ++i) *slots[i] = c(i);
        double sse = 0;
        std::vector<double> vars(inputs.cols());
        for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
            for (Eigen::Index k = 0; k < inputs.cols(); ++k) vars[k] = inputs(r, k);
            double v;
            if (!work.try_evaluate(vars, v)) return std::numeric_limits<double>::infinity();
            const double e = v - outputs(r);
            sse += e * e;
        }
        return sse;
    };

    const double base_sse = objective(c0);
    double best_sse = std::numeric_limits<double>::infinity();
    VectorXd best_c = c0;
    Rng rng(seed);
    bool any_finite = false;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        VectorXd start = c0;
        if (r > 0)
            for (int i = 0; i < nc; ++i)
                start(i) = c0(i) * (1.0 + gaussian(rng)) + gaussian(rng);
        auto res = bfgs_minimize(objective, start, {}, 120);
        if (std::isfinite(res.fval)) {
            any_finite = true;
            if (res.fval < best_sse) {
                best_sse = res.fval;
                best_c = res.x;
            }
        }
    }
    if (!any_finite || (std::isfinite(base_sse) && best_sse > base_sse)) {
        // never worse than the input expression
        for (int i = 0; i < nc; ++i) *slots[i] = c0(i);
        return work;
    }
    for (int i = 0; i < nc; ++i) *slots[i] = best_c(i);
    return work;
}

// ---------------------------------------------------------------------------
// Expression search
// ---------------------------------------------------------------------------

namespace {

struct GpContext {
    const MatrixXd& X;
    const VectorXd& y;
    std::vector<Op> binary_ops, unary_ops;
    int num_vars;
    double y_mean = 0, y_var = 0;
    const SearchConfig& cfg;
};

Expression random_terminal(GpContext& ctx, Rng& rng) {
    if (uniform01(rng) < 0.25)
        return Expression::constant(std::round(uniform_range(rng, -3.0, 3.0) * 100.0) / 100.0);
    return Expression::variable(uniform_int(rng, 0, ctx.num_vars - 1));
}

Expression random_tree(GpContext& ctx, Rng& rng, int depth_left, bool full) {
    const bool make_terminal =
        depth_left <= 1 ||
        (!full && uniform01(rng) < 0.3) ||
        (ctx.binary_ops.empty() && ctx.unary_ops.empty());
    if (make_terminal) return random_terminal(ctx, rng);
    const size_t n_ops = ctx.binary_ops.size() + ctx.unary_ops.size();
    const size_t pick = size_t(uniform01(rng) * n_ops);
    if (pick < ctx.binary_ops.size()) {
        const Op op = ctx.binary_ops[pick];
        Expression a = random_tree(ctx, rng, depth_left - 1, full);
        if (op == Op::Pow && uniform01(rng) < 0.7)  // integer exponents search better
            return Expression::binary(op, std::move(a),
                                      Expression::constant(double(uniform_int(rng, 2, 3))));
        Expression b = random_tree(ctx, rng, depth_left - 1, full);
        return Expression::binary(op, std::move(a), std::move(b));
    }
    return Expression::unary(ctx.unary_ops[pick - ctx.binary_ops.size()],
                             random_tree(ctx, rng, depth_left - 1, full));
}

std::vector<Expression*> all_nodes(Expression& e) {
    std::vector<Expression*> out;
    auto walk = [&](auto&& self, Expression& node) -> void {
        out.push_back(&node);
        for (auto& a : node.args) self(self, a);
    };
    walk(walk, e);
    return out;
}

// fitness with closed-form linear scaling a*f+b; returns {mse, a, b}
struct Fitness {
    double mse = std::numeric_limits<double>::infinity();
    double a = 1.0, b = 0.0;
};

Fitness evaluate_fitness(GpContext& ctx, const Expression& e) {
    Fitness fit;
    CompiledExpression ce;
    try {
        ce = CompiledExpression(e);
    } catch (const ParseError&) {
        return fit;
    }
    const Eigen::Index n = ctx.X.rows();
    VectorXd f(n);
    std::vector<double> vars(ctx.X.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < ctx.X.cols(); ++c) vars[c] = ctx.X(r, c);
        double v;
        if (!ce.eval(vars.data(), v) || std::abs(v) > 1e12) return fit;
        f(r) = v;
    }
    const double f_mean = f.mean();
    const double f_var = (f.array() - f_mean).square().sum() / n;
    double a, b;
    if (f_var < 1e-14) {
        a = 0.0;
        b = ctx.y_mean;
    } else {
        const double cov = ((f.array() - f_mean) * (ctx.y.array() - ctx.y_mean)).sum() / n;
        a = cov / f_var;
        b = ctx.y_mean - a * f_mean;
    }
    fit.mse = ((a * f.array() + b) - ctx.y.array()).square().sum() / n;
    fit.a = a;
    fit.b = b;
    return fit;
}

Expression embed_scaling(const Expression& e, double a, double b) {
    Expression scaled =
        a == 1.0 ? e : Expression::binary(Op::Mul, Expression::constant(a), e);
    if (b != 0.0)
        scaled = Expression::binary(Op::Add, std::move(scaled), Expression::constant(b));
    return simplify(scaled);
}

std::string expr_key(const Expression& e) {
    std::string key;
    for (const auto& t : e.to_prefix()) {
        key += t;
        key += ' ';
    }
    return key;
}

// additive terms whose constant coefficient is below the prune threshold are
// dropped, then the surviving constants are refit
Expression prune_and_refit(const Expression& expr, const MatrixXd& X, const VectorXd& y,
                           double prune_tol, uint64_t seed) {
    // flatten top-level +/- chain
    std::vector<std::pair<Expression, double>> terms;  // (term, sign)
    auto flatten = [&](auto&& self, const Expression& e, double sign) -> void {
        if (e.op == Op::Add) {
            self(self, e.args[0], sign);
            self(self, e.args[1], sign);
        } else if (e.op == Op::Sub) {
            self(self, e.args[0], sign);
            self(self, e.args[1], -sign);
        } else {
            terms.push_back({e, sign});
        }
    };
    flatten(flatten, expr, 1.0);
    if (terms.size() < 2) return expr;

    auto term_coefficient = [](const Expression& t) -> double {
        if (t.op == Op::Const) return t.value;
        if (t.op == Op::Mul && t.args[0].op == Op::Const) return t.args[0].value;
        if (t.op == Op::Mul && t.args[1].op == Op::Const) return t.args[1].value;
        return 1.0;  // unscaled terms never pruned
    };

    std::vector<std::pair<Expression, double>> kept;
    for (auto& [t, sign] : terms)
        if (std::abs(term_coefficient(t)) >= prune_tol) kept.push_back({t, sign});
    if (kept.empty() || kept.size() == terms.size()) return expr;

    Expression rebuilt = kept[0].second > 0
                             ? kept[0].first
                             : Expression::unary(Op::Neg, kept[0].first);
    for (size_t i = 1; i < kept.size(); ++i)
        rebuilt = Expression::binary(kept[i].second > 0 ? Op::Add : Op::Sub,
                                     std::move(rebuilt), kept[i].first);
    Expression refit = fit_constants(rebuilt, X, y, seed, 4);
    // keep the pruned form only if it did not lose real fit quality
    const double e_old = expression_mse(expr, X, y);
    const double e_new = expression_mse(refit, X, y);
    const double scale = std::max(1e-12, (y.array() - y.mean()).square().mean());
    if (e_new <= e_old + 1e-4 * scale) return simplify(refit);
    return expr;
}

}  // namespace

std::vector<ScoredExpression> search_regress(const MatrixXd& inputs, const VectorXd& outputs,
                                             const SearchConfig& cfg) {
    if (inputs.rows() == 0 || inputs.rows() != outputs.size())
        throw ConfigError("search_regress: empty or mismatched samples");
    GpContext ctx{inputs, outputs, {}, {}, int(inputs.cols()), 0, 0, cfg};
    for (Op op : cfg.operators)
        (op_arity(op) == 2 ? ctx.binary_ops : ctx.unary_ops).push_back(op);
    ctx.y_mean = outputs.mean();
    ctx.y_var = (outputs.array() - ctx.y_mean).square().sum() / outputs.size();

    Rng rng(splitmix64(cfg.seed));

    struct Individual {
        Expression expr;
        Fitness fit;
        double score = std::numeric_limits<double>::infinity();
    };
    auto score_of = [&](const Expression& e, double mse) {
        return mse + cfg.parsimony * e.size();
    };
    auto make_individual = [&](Expression e) {
        Individual ind;
        ind.fit = evaluate_fitness(ctx, e);
        ind.score = score_of(e, ind.fit.mse);
        ind.expr = std::move(e);
        return ind;
    };

    // seed population: primitive shapes, then ramped random trees
    std::vector<Individual> pop;
    std::vector<Expression> seeds;
    for (int v = 0; v < ctx.num_vars; ++v) seeds.push_back(Expression::variable(v));
    for (int v = 0; v < ctx.num_vars; ++v)
        for (int w = v; w < ctx.num_vars; ++w) {
            seeds.push_back(Expression::binary(Op::Mul, Expression::variable(v),
                                               Expression::variable(w)));
            if (w != v) {
                seeds.push_back(Expression::binary(Op::Sub, Expression::variable(w),
                                                   Expression::variable(v)));
                seeds.push_back(Expression::binary(Op::Add, Expression::variable(v),
                                                   Expression::variable(w)));
            }
        }
    for (Op u : ctx.unary_ops)
        for (const auto& s : seeds)
            if (s.size() <= 3) pop.push_back(make_individual(Expression::unary(u, s)));
    for (const auto& s : seeds) pop.push_back(make_individual(s));
    pop.push_back(make_individual(Expression::constant(1.0)));
    while (int(pop.size()) < cfg.population) {
        const int depth = 2 + int(uniform01(rng) * (cfg.max_depth - 1));
        pop.push_back(make_individual(random_tree(ctx, rng, depth, uniform01(rng) < 0.5)));
    }
    if (int(pop.size()) > cfg.population) pop.resize(cfg.population);

    // hall of fame keyed by canonical prefix string; holds refined candidates
    std::map<std::string, ScoredExpression> hof;
    std::set<std::string> refined;
    auto admit = [&](const Expression& embedded, double mse) {
        ScoredExpression s;
        s.expr = embedded;
        s.error = mse;
        s.size = embedded.size();
        s.score = score_of(embedded, mse);
        const std::string key = expr_key(embedded);
        auto it = hof.find(key);
        if (it == hof.end() || s.score < it->second.score) hof[key] = std::move(s);
    };
    auto refine = [&](const Individual& ind, int restarts, uint64_t fit_seed) {
        if (!std::isfinite(ind.fit.mse)) return;
        Expression embedded = embed_scaling(ind.expr, ind.fit.a, ind.fit.b);
        const std::string key = expr_key(embedded);
        if (refined.count(key)) return;
        refined.insert(key);
        Expression fitted = fit_constants(embedded, inputs, outputs, fit_seed, restarts);
        double mse = expression_mse(fitted, inputs, outputs);
        if (!std::isfinite(mse)) return;
        Expression pruned = prune_and_refit(fitted, inputs, outputs, cfg.const_prune,
                                            splitmix64(fit_seed));
        const double mse_pruned = expression_mse(pruned, inputs, outputs);
        admit(simplify(fitted), mse);
        if (std::isfinite(mse_pruned)) admit(pruned, mse_pruned);
    };

    admit(Expression::constant(ctx.y_mean), ctx.y_var);  // baseline, front never empty

    auto by_score = [](const Individual& a, const Individual& b) { return a.score < b.score; };

    for (int gen = 0; gen < cfg.iters; ++gen) {
        std::sort(pop.begin(), pop.end(), by_score);
        const int n_ref = std::min<int>(cfg.elite_refine, int(pop.size()));
        for (int i = 0; i < n_ref; ++i)
            refine(pop[i], 2, split_seed(cfg.seed, uint64_t(gen) * 1000 + i));

        std::vector<Individual> next;
        const int elite = std::min<int>(5, int(pop.size()));
        for (int i = 0; i < elite; ++i) next.push_back(pop[i]);

        auto tournament = [&]() -> const Individual& {
            const Individual* best = &pop[size_t(uniform01(rng) * pop.size())];
            for (int t = 1; t < 5; ++t) {
                const Individual* cand = &pop[size_t(uniform01(rng) * pop.size())];
                if (cand->score < best->score) best = cand;
            }
            return *best;
        };

        while (int(next.size()) < cfg.population) {
            const double roll = uniform01(rng);
            if (roll < 0.6 && pop.size() >= 2) {  // crossover
                Expression child = tournament().expr;
                const Expression& donor = tournament().expr;
                auto nodes_c = all_nodes(child);
                Expression donor_copy = donor;
                auto nodes_d = all_nodes(donor_copy);
                *nodes_c[size_t(uniform01(rng) * nodes_c.size())] =
                    *nodes_d[size_t(uniform01(rng) * nodes_d.size())];
                if (child.depth() <= cfg.max_depth + 2)
                    next.push_back(make_individual(std::move(child)));
            } else if (roll < 0.85) {  // subtree mutation
                Expression child = tournament().expr;
                auto nodes = all_nodes(child);
                *nodes[size_t(uniform01(rng) * nodes.size())] =
                    random_tree(ctx, rng, 3, false);
                if (child.depth() <= cfg.max_depth + 2)
                    next.push_back(make_individual(std::move(child)));
            } else if (roll < 0.95) {  // point mutation
                Expression child = tournament().expr;
                auto nodes = all_nodes(child);
                Expression* node = nodes[size_t(uniform01(rng) * nodes.size())];
                if (node->op == Op::Const) {
                    node->value = node->value * (1.0 + 0.3 * gaussian(rng)) + 0.1 * gaussian(rng);
                } else if (node->op == Op::Var) {
                    node->var = uniform_int(rng, 0, ctx.num_vars - 1);
                } else if (op_arity(node->op) == 2 && !ctx.binary_ops.empty()) {
                    node->op = ctx.binary_ops[size_t(uniform01(rng) * ctx.binary_ops.size())];
                } else if (op_arity(node->op) == 1 && !ctx.unary_ops.empty()) {
                    node->op = ctx.unary_ops[size_t(uniform01(rng) * ctx.unary_ops.size())];
                }
                next.push_back(make_individual(std::move(child)));
            } else {  // fresh blood
                const int depth = 2 + int(uniform01(rng) * (cfg.max_depth - 1));
                next.push_back(make_individual(random_tree(ctx, rng, depth, false)));
            }
        }
        pop = std::move(next);
    }
    std::sort(pop.begin(), pop.end(), by_score);
    for (int i = 0; i < std::min<int>(cfg.elite_refine * 2, int(pop.size())); ++i)
        refine(pop[i], 8, split_seed(cfg.seed, 999000 + i));

    // Pareto front by (error, size)
    std::vector<ScoredExpression> all;
    for (auto& [key, s] : hof) all.push_back(s);
    std::sort(all.begin(), all.end(), [](const ScoredExpression& a, const ScoredExpression& b) {
        if (a.error != b.error) return a.error < b.error;
        return a.size < b.size;
    });
    std::vector<ScoredExpression> front;
    int best_size = std::numeric_limits<int>::max();
    for (auto& s : all) {
        if (s.size < best_size) {
            front.push_back(s);
            best_size = s.size;
        }
    }
    std::sort(front.begin(), front.end(),
              [](const ScoredExpression& a, const ScoredExpression& b) {
                  return a.score < b.score;
              });
    return front;
}

// ---------------------------------------------------------------------------
// Decoupler regression + assembled RHS
// ---------------------------------------------------------------------------

namespace {

MatrixXd subsample_rows(const MatrixXd& pool, int n_raw, uint64_t seed) {
    if (pool.rows() <= n_raw) return pool;
    std::vector<int> idx(pool.rows());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    MatrixXd out(n_raw, pool.cols());
    for (int r = 0; r < n_raw; ++r) out.row(r) = pool.row(idx[r]);
    return out;
}

ExpressionInfo run_backend(const MatrixXd& reps, const VectorXd& y, const BackendConfig& backend,
                           const FunctionLibrary& library, double threshold, uint64_t seed) {
    ExpressionInfo info;
    if (backend.kind == BackendConfig::Kind::Sparse) {
        VectorXd xi = sparse_regress(reps, y, library, threshold, backend.stlsq_max_iters);
        info.expr = library.combination(xi);
        info.coefficients.assign(xi.data(), xi.data() + xi.size());
        info.fit_error = expression_mse(info.expr, reps, y);
    } else {
        SearchConfig cfg = backend.search;
        cfg.seed = seed;
        auto front = search_regress(reps, y, cfg);
        info.expr = front.front().expr;
        info.fit_error = front.front().error;
    }
    info.complexity = info.expr.size();
    return info;
}

}  // namespace

DiscoveredModel regress_decoupler(const DecouplerModel& model, const TrainingSet& ts,
                                  const Topology& topo, const SamplingConfig& sampling,
                                  const BackendConfig& backend) {
    const int d = model.d;
    const int K = model.num_node_types();
    const int E = model.num_edge_types();
    DiscoveredModel dm;
    dm.d = d;
    dm.seed = sampling.seed;
    dm.backend = backend.kind == BackendConfig::Kind::Sparse ? "sparse" : "search";
    if (backend.kind == BackendConfig::Kind::Sparse) {
        dm.self_library_names = backend.self_library.names;
        dm.inter_library_names = backend.inter_library.names;
    }

    // observed state pools from the training split
    std::vector<std::vector<int>> nodes_of_type(K);
    for (int i = 0; i < topo.n; ++i)
        nodes_of_type[std::min(topo.node_type[i], K - 1)].push_back(i);
    std::vector<size_t> train_times;
    for (size_t t = 0; t < ts.count(); ++t)
        if (ts.is_train[t]) train_times.push_back(t);

    dm.self_exprs.resize(K);
    for (int k = 0; k < K; ++k) {
        const auto& nodes = nodes_of_type[k];
        MatrixXd pool(train_times.size() * nodes.size(), d);
        size_t r = 0;
        for (size_t q : train_times)
            for (int i : nodes) {
                for (int c = 0; c < d; ++c) pool(r, c) = ts.states[(q * ts.n + i) * d + c];
                ++r;
            }
        MatrixXd raw = subsample_rows(pool, sampling.n_raw, split_seed(sampling.seed, 10 + k));
        const int kk = std::min<int>(sampling.k, int(raw.rows()));
        MatrixXd reps = kmeans_sample(raw, kk, split_seed(sampling.seed, 20 + k));
        MatrixXd outputs = model.query_self(k, reps);
        for (int dim = 0; dim < d; ++dim) {
            ExpressionInfo info = run_backend(reps, outputs.col(dim), backend,
                                              backend.self_library, backend.threshold,
                                              split_seed(sampling.seed, 1000 + k * 16 + dim));
            dm.self_exprs[k].push_back(std::move(info));
        }
    }

    dm.inter_exprs.resize(E);
    auto edges = topo.edges();
    for (int e = 0; e < E; ++e) {
        std::vector<Edge> typed;
        for (const auto& ed : edges)
            if (std::min(ed.type, E - 1) == e) typed.push_back(ed);
        if (typed.empty()) {
            for (int dim = 0; dim < d; ++dim) {
                ExpressionInfo zero;
                zero.expr = Expression::constant(0.0);
                zero.complexity = 1;
                dm.inter_exprs[e].push_back(std::move(zero));
            }
            continue;
        }
        MatrixXd pool(train_times.size() * typed.size(), 2 * d);
        size_t r = 0;
        for (size_t q : train_times)
            for (const auto& ed : typed) {
                for (int c = 0; c < d; ++c) {
                    pool(r, c) = ts.states[(q * ts.n + ed.dst) * d + c];
                    pool(r, d + c) = ts.states[(q * ts.n + ed.src) * d + c];
                }
                ++r;
            }
        MatrixXd raw = subsample_rows(pool, sampling.n_raw, split_seed(sampling.seed, 30 + e));
        const int kk = std::min<int>(sampling.k, int(raw.rows()));
        MatrixXd reps = kmeans_sample(raw, kk, split_seed(sampling.seed, 40 + e));
        MatrixXd outputs = model.query_inter(e, reps);
        for (int dim = 0; dim < d; ++dim) {
            ExpressionInfo info = run_backend(
                reps, outputs.col(dim), backend, backend.inter_library,
                backend.threshold_inter >= 0 ? backend.threshold_inter : backend.threshold,
                split_seed(sampling.seed, 2000 + e * 16 + dim));
            dm.inter_exprs[e].push_back(std::move(info));
        }
    }
    return dm;
}

RhsFn assemble_rhs(const DiscoveredModel& dm, const Topology& topo) {
    const int d = dm.d;
    for (const auto& per_type : dm.self_exprs)
        for (const auto& info : per_type)
            if (info.expr.max_var() >= d)
                throw ConfigError("assemble_rhs: self expression uses unbound variable");
    for (const auto& per_type : dm.inter_exprs)
        for (const auto& info : per_type)
            if (info.expr.max_var() >= 2 * d)
                throw ConfigError("assemble_rhs: interaction expression uses unbound variable");

    struct Compiled {
        std::vector<std::vector<CompiledExpression>> self, inter;  // [type][dim]
    };
    auto comp = std::make_shared<Compiled>();
    for (const auto& per_type : dm.self_exprs) {
        std::vector<CompiledExpression> dims;
        for (const auto& info : per_type) dims.emplace_back(info.expr);
        comp->self.push_back(std::move(dims));
    }
    for (const auto& per_type : dm.inter_exprs) {
        std::vector<CompiledExpression> dims;
        for (const auto& info : per_type) dims.emplace_back(info.expr);
        comp->inter.push_back(std::move(dims));
    }
    auto edges = std::make_shared<std::vector<Edge>>(topo.edges());
    auto node_type = std::make_shared<std::vector<int>>(topo.node_type);
    const int n = topo.n;
    const int K = int(comp->self.size()), E = int(comp->inter.size());

    return [comp, edges, node_type, n, d, K, E](double, std::span<const double> x,
                                                std::span<double> dx) {
        std::vector<double> vars(2 * d);
        for (int i = 0; i < n; ++i) {
            const int k = std::min((*node_type)[i], K - 1);
            for (int c = 0; c < d; ++c) vars[c] = x[i * d + c];
            for (int m = 0; m < d; ++m) {
                double v;
                if (!comp->self[k][m].eval(vars.data(), v))
                    throw StageError("assemble_rhs: self expression domain violation");
                dx[i * d + m] = v;
            }
        }
        for (const auto& ed : *edges) {
            const int e = std::min(ed.type, E - 1);
            for (int c = 0; c < d; ++c) {
                vars[c] = x[ed.dst * d + c];
                vars[d + c] = x[ed.src * d + c];
            }
            for (int m = 0; m < d; ++m) {
                double v;
                if (!comp->inter[e][m].eval(vars.data(), v))
                    throw StageError("assemble_rhs: interaction expression domain violation");
                dx[ed.dst * d + m] += ed.weight * v;
            }
        }
    };
}

// ---------------------------------------------------------------------------
// DiscoveredModel serialisation
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json info_to_json(const ExpressionInfo& info) {
    nlohmann::ordered_json j;
    j["prefix"] = info.expr.to_prefix();
    j["infix"] = info.expr.to_infix();
    j["fit_error"] = info.fit_error;
    j["complexity"] = info.complexity;
    if (!info.coefficients.empty()) j["coefficients"] = info.coefficients;
    return j;
}

ExpressionInfo info_from_json(const nlohmann::json& j) {
    ExpressionInfo info;
    info.expr = parse_prefix(j.at("prefix").get<std::vector<std::string>>());
    info.fit_error = j.at("fit_error");
    info.complexity = j.at("complexity");
    if (j.contains("coefficients"))
        info.coefficients = j.at("coefficients").get<std::vector<double>>();
    return info;
}

}  // namespace

std::string DiscoveredModel::to_json() const {
    nlohmann::ordered_json j;
    j["d"] = d;
    j["backend"] = backend;
    j["seed"] = seed;
    if (!self_library_names.empty()) j["self_library"] = self_library_names;
    if (!inter_library_names.empty()) j["inter_library"] = inter_library_names;
    j["self"] = nlohmann::ordered_json::array();
    for (const auto& per_type : self_exprs) {
        nlohmann::ordered_json dims = nlohmann::ordered_json::array();
        for (const auto& info : per_type) dims.push_back(info_to_json(info));
        j["self"].push_back(dims);
    }
    j["inter"] = nlohmann::ordered_json::array();
    for (const auto& per_type : inter_exprs) {
        nlohmann::ordered_json dims = nlohmann::ordered_json::array();
        for (const auto& info : per_type) dims.push_back(info_to_json(info));
        j["inter"].push_back(dims);
    }
    return j.dump(2);
}

DiscoveredModel DiscoveredModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DiscoveredModel dm;
    dm.d = j.at("d");
    dm.backend = j.at("backend");
    dm.seed = j.at("seed");
    if (j.contains("self_library"))
        dm.self_library_names = j.at("self_library").get<std::vector<std::string>>();
    if (j.contains("inter_library"))
        dm.inter_library_names = j.at("inter_library").get<std::vector<std::string>>();
    for (const auto& per_type : j.at("self")) {
        std::vector<ExpressionInfo> dims;
        for (const auto& ji : per_type) dims.push_back(info_from_json(ji));
        dm.self_exprs.push_back(std::move(dims));
    }
    for (const auto& per_type : j.at("inter")) {
        std::vector<ExpressionInfo> dims;
        for (const auto& ji : per_type) dims.push_back(info_from_json(ji));
        dm.inter_exprs.push_back(std::move(dims));
    }
    return dm;
}

void DiscoveredModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw StageError("discovered model: cannot write " + path);
    out << to_json() << "\n";
}

DiscoveredModel DiscoveredModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("discovered model: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace netdyn
