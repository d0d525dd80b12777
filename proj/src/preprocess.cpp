#include "netdyn/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "netdyn/common.hpp"

namespace netdyn {

std::vector<double> five_point_derivative(std::span<const double> x, double h,
                                          std::vector<uint8_t>* boundary_flags) {
    const size_t n = x.size();
    if (n < 5) throw ConfigError("five_point_derivative: need at least 5 samples");
    std::vector<double> d(n);
    const double inv12h = 1.0 / (12.0 * h);
    d[0] = (-25 * x[0] + 48 * x[1] - 36 * x[2] + 16 * x[3] - 3 * x[4]) * inv12h;
    d[1] = (-3 * x[0] - 10 * x[1] + 18 * x[2] - 6 * x[3] + x[4]) * inv12h;
    for (size_t i = 2; i + 2 < n; ++i)
        d[i] = (x[i - 2] - 8 * x[i - 1] + 8 * x[i + 1] - x[i + 2]) * inv12h;
    d[n - 2] = (3 * x[n - 1] + 10 * x[n - 2] - 18 * x[n - 3] + 6 * x[n - 4] - x[n - 5]) * inv12h;
    d[n - 1] = (25 * x[n - 1] - 48 * x[n - 2] + 36 * x[n - 3] - 16 * x[n - 4] + 3 * x[n - 5]) * inv12h;
    if (boundary_flags) {
        boundary_flags->assign(n, 0);
        (*boundary_flags)[0] = (*boundary_flags)[1] = 1;
        (*boundary_flags)[n - 2] = (*boundary_flags)[n - 1] = 1;
    }
    return d;
}

std::vector<double> sg_smooth(std::span<const double> x, int window, int polyorder) {
    const int n = int(x.size());
    if (window % 2 == 0) throw ConfigError("sg_smooth: window must be odd");
    if (window <= polyorder) throw ConfigError("sg_smooth: window must exceed polyorder");
    if (window > n) throw ConfigError("sg_smooth: window larger than series");
    if (window == 1) return {x.begin(), x.end()};

    const int half = window / 2;
    // precomputed interior convolution: centre row of (J^T J)^{-1} J^T
    Eigen::MatrixXd J(window, polyorder + 1);
    for (int r = 0; r < window; ++r) {
        double v = 1.0;
        for (int c = 0; c <= polyorder; ++c) {
            J(r, c) = v;
            v *= (r - half);
        }
    }
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(polyorder + 1);
    e0(0) = 1.0;
    Eigen::VectorXd coeffs = J * (J.transpose() * J).ldlt().solve(e0);

    std::vector<double> out(n);
    for (int i = half; i < n - half; ++i) {
        double acc = 0.0;
        for (int r = 0; r < window; ++r) acc += coeffs(r) * x[i - half + r];
        out[i] = acc;
    }
    // edges: fit the polynomial on the truncated one-sided window
    auto edge_fit = [&](int i, int lo, int hi) {
        const int len = hi - lo;
        const int ord = std::min(polyorder, len - 1);
        Eigen::MatrixXd Je(len, ord + 1);
        for (int r = 0; r < len; ++r) {
            double v = 1.0;
            for (int c = 0; c <= ord; ++c) {
                Je(r, c) = v;
                v *= (lo + r - i);
            }
        }
        Eigen::VectorXd ys(len);
        for (int r = 0; r < len; ++r) ys(r) = x[lo + r];
        Eigen::VectorXd beta = (Je.transpose() * Je).ldlt().solve(Je.transpose() * ys);
        return beta(0);
    };
    for (int i = 0; i < half && i < n; ++i) out[i] = edge_fit(i, 0, std::min(window, n));
    for (int i = std::max(n - half, half); i < n; ++i)
        out[i] = edge_fit(i, std::max(0, n - window), n);
    return out;
}

// ---------------------------------------------------------------------------
// Interval selection
// ---------------------------------------------------------------------------

namespace {

struct GridSpec {
    int stride;
    int count;  // grid points, indices 0, stride, ..., (count-1)*stride
};

GridSpec window_grid(const Trajectory& traj, double t_star, int s_steps) {
    const double base_dt = traj.dt();
    const int end_idx = std::min<int>(int(std::floor(t_star / base_dt + 1e-9)),
                                      int(traj.samples()) - 1);
    int stride = std::max(1, int(std::lround((t_star / s_steps) / base_dt)));
    int count = end_idx / stride + 1;
    while (count < 5 && stride > 1) {  // derivative needs 5 points
        --stride;
        count = end_idx / stride + 1;
    }
    return {stride, count};
}

double objective_on_grid(const Trajectory& traj, const GridSpec& g, double lambda) {
    const int n = traj.n, d = traj.d;
    const double h = g.stride * traj.dt();
    std::vector<double> series(g.count);
    double obj = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            for (int s = 0; s < g.count; ++s)
                series[s] = traj.value(size_t(s) * g.stride, i, k);
            auto deriv = five_point_derivative(series, h);
            for (int s = 0; s + 1 < g.count; ++s) {
                const double jump = deriv[s + 1] - deriv[s];
                obj += jump * jump;
            }
            const double anchor = deriv[g.count - 1];
            for (int s = std::max(0, g.count - 11); s < g.count; ++s) {
                const double dev = deriv[s] - anchor;
                obj += lambda * dev * dev;
            }
        }
    }
    return obj;
}

}  // namespace

double interval_objective(const Trajectory& traj, double t_star, int s_steps, double lambda) {
    if (traj.samples() < 5) throw ConfigError("select_interval: trajectory shorter than 5 samples");
    return objective_on_grid(traj, window_grid(traj, t_star, s_steps), lambda);
}

IntervalChoice select_interval(const Trajectory& traj, int s_steps, double lambda,
                               const SaConfig& sa) {
    if (traj.samples() < 5) throw ConfigError("select_interval: trajectory shorter than 5 samples");
    if (lambda < 0) throw ConfigError("select_interval: lambda must be >= 0");
    const double base_dt = traj.dt();
    const double t_min = 4.0 * base_dt;
    const double t_max = traj.duration();

    auto snap = [&](double t) {
        double s = std::round(t / base_dt) * base_dt;
        return std::clamp(s, t_min, t_max);
    };
    auto eval = [&](double t) { return interval_objective(traj, t, s_steps, lambda); };

    double t_cur = t_max;  // initial candidate: the full duration
    double f_cur = eval(t_cur);
    double t_best = t_cur, f_best = f_cur;

    Rng rng(sa.seed);
    if (sa.iters > 0) {
        double temp = sa.t0;
        if (temp < 0) {
            double lo = f_cur, hi = f_cur;
            for (int p = 0; p < 20; ++p) {
                const double f = eval(snap(uniform_range(rng, t_min, t_max)));
                lo = std::min(lo, f);
                hi = std::max(hi, f);
            }
            temp = hi - lo;
            if (temp <= 0) temp = 1.0;
        }
        const double step_scale = (t_max - t_min) / 10.0;
        for (int it = 0; it < sa.iters; ++it) {
            const double t_prop = snap(t_cur + gaussian(rng) * step_scale);
            const double f_prop = eval(t_prop);
            const double delta = f_prop - f_cur;
            if (delta <= 0 || uniform01(rng) < std::exp(-delta / std::max(temp, 1e-300))) {
                t_cur = t_prop;
                f_cur = f_prop;
                if (f_cur < f_best) {
                    t_best = t_cur;
                    f_best = f_cur;
                }
            }
            temp *= sa.cooling;
        }
    }

    IntervalChoice out;
    const GridSpec g = window_grid(traj, t_best, s_steps);
    out.t_star = t_best;
    out.s_steps = s_steps;
    out.stride = g.stride;
    out.grid_count = g.count;
    out.delta_t = g.stride * base_dt;
    out.objective_value = f_best;
    return out;
}

IntervalChoice full_interval(const Trajectory& traj, int stride) {
    IntervalChoice c;
    c.t_star = traj.duration();
    c.stride = std::max(1, stride);
    c.grid_count = int((traj.samples() - 1) / c.stride) + 1;
    c.s_steps = c.grid_count - 1;
    c.delta_t = c.stride * traj.dt();
    c.objective_value = 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// Training pairs
// ---------------------------------------------------------------------------

size_t TrainingSet::train_count() const {
    return size_t(std::count(is_train.begin(), is_train.end(), uint8_t(1)));
}

TrainingSet build_training_pairs(const Trajectory& traj, const Topology& topo,
                                 const IntervalChoice& choice, const SmoothConfig& smooth,
                                 uint64_t split_seed, double val_ratio, bool interior_only) {
    if (topo.n != traj.n) throw ConfigError("build_training_pairs: topology/trajectory mismatch");
    const GridSpec g{choice.stride, choice.grid_count};
    if (g.count < 5) throw ConfigError("build_training_pairs: window too short");
    const int n = traj.n, d = traj.d;
    const double h = g.stride * traj.dt();

    // smoothed states and derivatives per (node, dim) series on the window grid
    std::vector<double> sm(size_t(g.count) * n * d), dv(size_t(g.count) * n * d);
    std::vector<double> series(g.count);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
            for (int s = 0; s < g.count; ++s)
                series[s] = traj.value(size_t(s) * g.stride, i, k);
            std::vector<double> ss = smooth.enabled
                                         ? sg_smooth(series, smooth.window, smooth.polyorder)
                                         : series;
            auto deriv = five_point_derivative(ss, h);
            for (int s = 0; s < g.count; ++s) {
                sm[(size_t(s) * n + i) * d + k] = ss[s];
                dv[(size_t(s) * n + i) * d + k] = deriv[s];
            }
        }

    const int lo = interior_only ? 2 : 0;
    const int hi = interior_only ? g.count - 2 : g.count;
    if (hi <= lo) throw ConfigError("build_training_pairs: empty window after boundary exclusion");

    TrainingSet ts;
    ts.n = n;
    ts.d = d;
    for (int s = lo; s < hi; ++s) {
        ts.times.push_back(traj.times[size_t(s) * g.stride]);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                ts.states.push_back(sm[(size_t(s) * n + i) * d + k]);
                ts.targets.push_back(dv[(size_t(s) * n + i) * d + k]);
            }
        if (!interior_only)
            ts.is_boundary.push_back(s < 2 || s >= g.count - 2);
    }
    for (double v : ts.targets)
        if (!std::isfinite(v)) throw StageError("build_training_pairs: non-finite target");

    // random timestamp split; validation size floors
    const size_t count = ts.times.size();
    std::vector<size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(split_seed);
    for (size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const size_t val_count = size_t(std::floor(val_ratio * double(count)));
    ts.is_train.assign(count, 1);
    for (size_t i = 0; i < val_count; ++i) ts.is_train[order[i]] = 0;
    return ts;
}

void save_training_csv(const TrainingSet& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_training_csv: cannot write " + path);
    out << "node,t";
    for (int k = 0; k < ts.d; ++k) out << ",x" << k;
    for (int k = 0; k < ts.d; ++k) out << ",xdot" << k;
    out << ",split\n";
    char buf[64];
    for (size_t s = 0; s < ts.count(); ++s)
        for (int i = 0; i < ts.n; ++i) {
            out << i;
            snprintf(buf, sizeof buf, ",%.17g", ts.times[s]);
            out << buf;
            for (int k = 0; k < ts.d; ++k) {
                snprintf(buf, sizeof buf, ",%.17g", ts.states[(s * ts.n + i) * ts.d + k]);
                out << buf;
            }
            for (int k = 0; k < ts.d; ++k) {
                snprintf(buf, sizeof buf, ",%.17g", ts.targets[(s * ts.n + i) * ts.d + k]);
                out << buf;
            }
            out << (ts.is_train[s] ? ",train\n" : ",val\n");
        }
}

}  // namespace netdyn
