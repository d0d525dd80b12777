#include "netdyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "netdyn/common.hpp"
#include "json.hpp"

namespace netdyn {

Model model_from_string(const std::string& name) {
    std::string s;
    for (char c : name) s += char(std::tolower(static_cast<unsigned char>(c)));
    if (s == "bio") return Model::Bio;
    if (s == "gene") return Model::Gene;
    if (s == "mi") return Model::MI;
    if (s == "lv") return Model::LV;
    if (s == "neur") return Model::Neur;
    if (s == "epi") return Model::Epi;
    if (s == "kuramoto") return Model::Kuramoto;
    if (s == "fhn") return Model::FHN;
    if (s == "pp" || s == "predatorprey" || s == "predator_prey") return Model::PredatorPrey;
    if (s == "lorenz") return Model::Lorenz;
    if (s == "rossler") return Model::Rossler;
    if (s == "custom") return Model::Custom;
    throw ConfigError("unknown dynamics model: " + name);
}

std::string model_to_string(Model m) {
    switch (m) {
        case Model::Bio: return "bio";
        case Model::Gene: return "gene";
        case Model::MI: return "mi";
        case Model::LV: return "lv";
        case Model::Neur: return "neur";
        case Model::Epi: return "epi";
        case Model::Kuramoto: return "kuramoto";
        case Model::FHN: return "fhn";
        case Model::PredatorPrey: return "pp";
        case Model::Lorenz: return "lorenz";
        case Model::Rossler: return "rossler";
        case Model::Custom: return "custom";
    }
    return "?";
}

int model_dim(Model m) {
    switch (m) {
        case Model::FHN:
        case Model::PredatorPrey: return 2;
        case Model::Lorenz:
        case Model::Rossler: return 3;
        default: return 1;
    }
}

std::map<std::string, double> default_params(Model m) {
    switch (m) {
        case Model::Bio: return {{"F", 1.0}, {"B", -1.0}};
        case Model::Gene: return {{"B", 2.0}, {"f", 1.0}, {"h", 2.0}};
        case Model::MI:
            return {{"b", 1.0}, {"k", 5.0}, {"c", 1.0}, {"d", 5.0}, {"e", 0.9}, {"h", 0.1}};
        case Model::LV: return {{"alpha", 0.5}, {"theta", 1.0}};
        case Model::Neur: return {{"tau", -1.0}, {"mu", 1.0}};
        case Model::Epi: return {{"delta", 1.0}};
        case Model::Kuramoto:
            return {{"epsilon", 0.015}, {"omega_mu", 1.0}, {"omega_sigma", 1.0}};
        case Model::FHN: return {{"epsilon", 1.0}, {"a", 0.28}, {"b", 0.5}, {"c", -0.04}};
        case Model::PredatorPrey: return {{"a", 1.0}, {"b", 0.2}, {"c", 0.7}};
        case Model::Lorenz:
            return {{"a", 10.0}, {"epsilon", 0.05}, {"r", 28.0}, {"b", 10.0 / 3.0}};
        case Model::Rossler:
            return {{"epsilon", 0.15}, {"a", 0.2}, {"b", 0.2}, {"c", 5.7}};
        case Model::Custom: return {};
    }
    return {};
}

double DynamicsSpec::param(const std::string& name) const {
    auto it = params.find(name);
    if (it != params.end()) return it->second;
    auto defs = default_params(model);
    auto dit = defs.find(name);
    if (dit != defs.end()) return dit->second;
    throw ConfigError("dynamics: unknown parameter " + name + " for model " + model_to_string(model));
}

SimSettings default_sim_settings(Model m) {
    SimSettings s;
    switch (m) {
        case Model::Bio:
            s.init = {InitSpec::Kind::Uniform, 0, 2}; s.dt = 1e-4; s.t_inference = 0.1; s.t_end = 0.5; break;
        case Model::Gene:
            s.init = {InitSpec::Kind::Uniform, 0, 2}; s.dt = 0.01; s.t_inference = 5; s.t_end = 10; break;
        case Model::MI:
            s.init = {InitSpec::Kind::Uniform, 0, 2}; s.dt = 0.001; s.t_inference = 1; s.t_end = 5; break;
        case Model::LV:
            s.init = {InitSpec::Kind::Uniform, 0, 5}; s.dt = 1e-4; s.t_inference = 0.1; s.t_end = 0.5; break;
        case Model::Neur:
            s.init = {InitSpec::Kind::Uniform, 0, 2}; s.dt = 0.01; s.t_inference = 5; s.t_end = 10; break;
        case Model::Epi:
            s.init = {InitSpec::Kind::Uniform, 0, 1}; s.dt = 0.001; s.t_inference = 1; s.t_end = 5; break;
        case Model::Kuramoto:
            s.init = {InitSpec::Kind::Uniform, 0, 2}; s.dt = 0.01; s.t_inference = 5; s.t_end = 100; break;
        case Model::FHN:
        case Model::Lorenz:
        case Model::Rossler: {
            s.init.kind = InitSpec::Kind::Gaussian; s.init.mu = 0; s.init.sigma = 1;
            s.dt = 0.01; s.t_inference = 3; s.t_end = 100; break;
        }
        case Model::PredatorPrey:
            s.init = {InitSpec::Kind::Uniform, -1, 1}; s.dt = 0.01; s.t_inference = 3; s.t_end = 10; break;
        case Model::Custom: break;
    }
    return s;
}

Trajectory Trajectory::head(double t_max) const {
    Trajectory out = *this;
    size_t keep = 0;
    while (keep < times.size() && times[keep] <= t_max + 1e-12) ++keep;
    out.times.assign(times.begin(), times.begin() + keep);
    out.states.assign(states.begin(), states.begin() + keep * size_t(n) * d);
    return out;
}

// ---------------------------------------------------------------------------
// Built-in right-hand sides
// ---------------------------------------------------------------------------

namespace {

void check_shape(const DynamicsSpec& spec, const Topology& topo, size_t state_size) {
    if (state_size != size_t(topo.n) * spec.d)
        throw ConfigError("builtin_rhs: state shape mismatch, expected n*d = " +
                          std::to_string(size_t(topo.n) * spec.d));
    if (spec.model != Model::Custom && spec.d != model_dim(spec.model))
        throw ConfigError("builtin_rhs: model " + model_to_string(spec.model) + " requires d = " +
                          std::to_string(model_dim(spec.model)));
}

void rhs_scalar_coupled(const DynamicsSpec& spec, const Topology& topo,
                        std::span<const double> x, std::span<double> dx) {
    const int n = topo.n;
    const Model m = spec.model;
    switch (m) {
        case Model::Bio: {
            const double F = spec.param("F"), B = spec.param("B");
            for (int i = 0; i < n; ++i) dx[i] = F + B * x[i];
            break;
        }
        case Model::Gene: {
            const double B = spec.param("B"), f = spec.param("f");
            for (int i = 0; i < n; ++i) dx[i] = -B * std::pow(x[i], f);
            break;
        }
        case Model::MI: {
            const double b = spec.param("b"), k = spec.param("k"), c = spec.param("c");
            for (int i = 0; i < n; ++i)
                dx[i] = b + x[i] * (1.0 - x[i] / k) * (x[i] / c - 1.0);
            break;
        }
        case Model::LV: {
            const double alpha = spec.param("alpha"), theta = spec.param("theta");
            for (int i = 0; i < n; ++i) dx[i] = x[i] * (alpha - theta * x[i]);
            break;
        }
        case Model::Neur: {
            for (int i = 0; i < n; ++i) dx[i] = -x[i];
            break;
        }
        case Model::Epi: {
            const double delta = spec.param("delta");
            for (int i = 0; i < n; ++i) dx[i] = -delta * x[i];
            break;
        }
        case Model::Kuramoto: {
            auto it = spec.node_params.find("omega");
            if (it == spec.node_params.end() || int(it->second.size()) != n)
                throw ConfigError("kuramoto: per-node omega missing (simulate_dataset draws it)");
            for (int i = 0; i < n; ++i) dx[i] = it->second[i];
            break;
        }
        default:
            break;
    }
    // pairwise terms
    const double h = m == Model::Gene ? spec.param("h") : 0.0;
    const double dM = m == Model::MI ? spec.param("d") : 0.0;
    const double eM = m == Model::MI ? spec.param("e") : 0.0;
    const double hM = m == Model::MI ? spec.param("h") : 0.0;
    const double tau = m == Model::Neur ? spec.param("tau") : 0.0;
    const double mu = m == Model::Neur ? spec.param("mu") : 0.0;
    const double eps = m == Model::Kuramoto ? spec.param("epsilon") : 0.0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double w = topo.weight(i, j);
            if (w == 0.0) continue;
            switch (m) {
                case Model::Bio: acc += w * x[i] * x[j]; break;
                case Model::Gene: {
                    const double xh = std::pow(x[j], h);
                    acc += w * xh / (xh + 1.0);
                    break;
                }
                case Model::MI:
                    acc += w * x[i] * x[j] / (dM + eM * x[i] + hM * x[j]);
                    break;
                case Model::LV: acc -= w * x[i] * x[j]; break;
                case Model::Neur:
                    acc += w / (1.0 + std::exp(tau * (x[j] - mu)));
                    break;
                case Model::Epi: acc += w * (1.0 - x[i]) * x[j]; break;
                case Model::Kuramoto: acc += eps * w * std::sin(x[j] - x[i]); break;
                default: break;
            }
        }
        dx[i] += acc;
    }
}

void rhs_fhn(const DynamicsSpec& spec, const Topology& topo,
             std::span<const double> x, std::span<double> dx) {
    const int n = topo.n;
    const double eps = spec.param("epsilon"), a = spec.param("a"), b = spec.param("b"),
                 c = spec.param("c");
    for (int i = 0; i < n; ++i) {
        const double v = x[i * 2], w = x[i * 2 + 1];
        double coupling = 0.0;
        const int kin = topo.in_degree(i);
        if (kin > 0) {
            for (int j = 0; j < n; ++j) {
                const double aij = topo.weight(i, j);
                if (aij != 0.0) coupling += aij * (v - x[j * 2]);
            }
            coupling /= kin;
        }
        dx[i * 2] = v - v * v * v - w - eps * coupling;
        dx[i * 2 + 1] = a + b * v + c * w;
    }
}

void rhs_lorenz(const DynamicsSpec& spec, const Topology& topo,
                std::span<const double> x, std::span<double> dx) {
    const int n = topo.n;
    const double a = spec.param("a"), eps = spec.param("epsilon"), r = spec.param("r"),
                 b = spec.param("b");
    for (int i = 0; i < n; ++i) {
        const double x1 = x[i * 3], x2 = x[i * 3 + 1], x3 = x[i * 3 + 2];
        double coupling = 0.0;
        for (int j = 0; j < n; ++j) {
            const double w = topo.weight(i, j);
            if (w != 0.0) coupling += w * (x[j * 3] - x1);
        }
        dx[i * 3] = a * (x2 - x1) + eps * coupling;
        dx[i * 3 + 1] = r * x1 - x1 * x3 - x2;
        dx[i * 3 + 2] = x2 * x1 - b * x3;
    }
}

void rhs_rossler(const DynamicsSpec& spec, const Topology& topo,
                 std::span<const double> x, std::span<double> dx) {
    const int n = topo.n;
    const double eps = spec.param("epsilon"), a = spec.param("a"), b = spec.param("b"),
                 c = spec.param("c");
    for (int i = 0; i < n; ++i) {
        const double x1 = x[i * 3], x2 = x[i * 3 + 1], x3 = x[i * 3 + 2];
        double coupling = 0.0;
        for (int j = 0; j < n; ++j) {
            const double w = topo.weight(i, j);
            if (w != 0.0) coupling += w * (x[j * 3] - x1);
        }
        dx[i * 3] = -x2 - x3 + eps * coupling;
        dx[i * 3 + 1] = x1 + a * x2;
        dx[i * 3 + 2] = b + x3 * (x1 - c);
    }
}

void rhs_predator_prey(const DynamicsSpec& spec, const Topology& topo,
                       std::span<const double> x, std::span<double> dx) {
    const int n = topo.n;
    const int n_prey = n - 1;
    const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c");
    auto px = [&](int i) { return x[i * 2]; };
    auto py = [&](int i) { return x[i * 2 + 1]; };
    // predator chases the swarm centroid direction field
    double sx = 0.0, sy = 0.0;
    for (int j = 1; j < n; ++j) {
        const double ddx = px(j) - px(0), ddy = py(j) - py(0);
        const double r2 = std::max(ddx * ddx + ddy * ddy, 1e-12);
        sx += ddx / r2;
        sy += ddy / r2;
    }
    dx[0] = c / n_prey * sx;
    dx[1] = c / n_prey * sy;
    for (int i = 1; i < n; ++i) {
        const double rx = px(i) - px(0), ry = py(i) - py(0);
        const double r2 = std::max(rx * rx + ry * ry, 1e-12);
        double fx = b * rx / r2, fy = b * ry / r2;
        for (int j = 1; j < n; ++j) {
            if (j == i) continue;
            const double ddx = px(i) - px(j), ddy = py(i) - py(j);
            const double q2 = std::max(ddx * ddx + ddy * ddy, 1e-12);
            fx += (ddx / q2 - a * ddx) / n_prey;
            fy += (ddy / q2 - a * ddy) / n_prey;
        }
        dx[i * 2] = fx;
        dx[i * 2 + 1] = fy;
    }
}

}  // namespace

std::vector<double> builtin_rhs(const DynamicsSpec& spec, const Topology& topo,
                                std::span<const double> state, double t) {
    check_shape(spec, topo, state.size());
    std::vector<double> dx(state.size(), 0.0);
    switch (spec.model) {
        case Model::FHN: rhs_fhn(spec, topo, state, dx); break;
        case Model::Lorenz: rhs_lorenz(spec, topo, state, dx); break;
        case Model::Rossler: rhs_rossler(spec, topo, state, dx); break;
        case Model::PredatorPrey: rhs_predator_prey(spec, topo, state, dx); break;
        case Model::Custom:
            if (!spec.custom) throw ConfigError("builtin_rhs: Custom model without rhs");
            spec.custom(t, state, dx);
            break;
        default: rhs_scalar_coupled(spec, topo, state, dx); break;
    }
    return dx;
}

RhsFn make_rhs(const DynamicsSpec& spec, const Topology& topo) {
    if (spec.model == Model::Custom) return spec.custom;
    DynamicsSpec s = spec;
    Topology t = topo;
    return [s, t](double time, std::span<const double> x, std::span<double> dx) {
        auto v = builtin_rhs(s, t, x, time);
        std::copy(v.begin(), v.end(), dx.begin());
    };
}

Topology make_predator_prey_topology(int n) {
    if (n < 3) throw ConfigError("predator_prey: need at least 3 nodes");
    Topology t(n, true);
    t.node_type.assign(n, 1);
    t.node_type[0] = 0;
    for (int j = 1; j < n; ++j) t.set_edge(0, j, 1.0, 0);  // prey -> predator
    for (int i = 1; i < n; ++i) t.set_edge(i, 0, 1.0, 1);  // predator -> prey
    for (int i = 1; i < n; ++i)
        for (int j = 1; j < n; ++j)
            if (i != j) t.set_edge(i, j, 1.0, 2);          // prey -> prey
    return t;
}

Trajectory simulate_dataset(const DynamicsSpec& spec, const Topology& topo,
                            const InitSpec& init, const SimSettings& settings, uint64_t seed) {
    DynamicsSpec s = spec;
    if (s.model == Model::Kuramoto && !s.node_params.count("omega")) {
        Rng rng(split_seed(seed, "omega"));
        std::vector<double> omega(topo.n);
        for (auto& w : omega)
            w = gaussian(rng, s.param("omega_mu"), s.param("omega_sigma"));
        s.node_params["omega"] = omega;
    }
    std::vector<double> x0(size_t(topo.n) * s.d);
    Rng rng(split_seed(seed, "init"));
    for (auto& v : x0) {
        switch (init.kind) {
            case InitSpec::Kind::Uniform: v = uniform_range(rng, init.lo, init.hi); break;
            case InitSpec::Kind::Gaussian: v = gaussian(rng, init.mu, init.sigma); break;
            case InitSpec::Kind::Constant: v = init.value; break;
        }
    }
    Trajectory traj = integrate_ivp(s, topo, x0, settings.t_end, settings.dt,
                                    settings.rtol, settings.atol);
    traj.seed = seed;
    return traj;
}

Trajectory add_state_noise(const Trajectory& traj, double snr_db, uint64_t seed) {
    if (std::isinf(snr_db)) return traj;
    if (!std::isfinite(snr_db)) throw ConfigError("add_state_noise: snr_db must be finite or +inf");
    Trajectory out = traj;
    const double beta = std::pow(10.0, -snr_db / 20.0);
    Rng rng(seed);
    for (auto& v : out.states) v += beta * gaussian(rng) * v;
    return out;
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_trajectory_csv: cannot write " + path);
    out << "t,node,dim,value\n";
    char buf[96];
    for (size_t t = 0; t < traj.samples(); ++t)
        for (int i = 0; i < traj.n; ++i)
            for (int k = 0; k < traj.d; ++k) {
                snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g\n", traj.times[t], i, k,
                         traj.value(t, i, k));
                out << buf;
            }
}

Trajectory load_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("load_trajectory_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t,node,dim,value")
        throw StageError("load_trajectory_csv: bad header in " + path);
    struct Row { double t; int node, dim; double v; };
    std::vector<Row> rows;
    int max_node = -1, max_dim = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r;
        if (sscanf(line.c_str(), "%lg,%d,%d,%lg", &r.t, &r.node, &r.dim, &r.v) != 4)
            throw StageError("load_trajectory_csv: parse error: " + line);
        rows.push_back(r);
        max_node = std::max(max_node, r.node);
        max_dim = std::max(max_dim, r.dim);
    }
    Trajectory traj;
    traj.n = max_node + 1;
    traj.d = max_dim + 1;
    for (const auto& r : rows)
        if (traj.times.empty() || r.t > traj.times.back() + 1e-15) traj.times.push_back(r.t);
    traj.states.assign(traj.times.size() * size_t(traj.n) * traj.d, 0.0);
    size_t per_frame = size_t(traj.n) * traj.d;
    size_t idx = 0;
    for (const auto& r : rows) {
        while (idx + 1 < traj.times.size() && std::abs(traj.times[idx] - r.t) > 1e-15) ++idx;
        if (std::abs(traj.times[idx] - r.t) > 1e-12) idx = 0;  // out-of-order fallback
        traj.states[idx * per_frame + size_t(r.node) * traj.d + r.dim] = r.v;
    }
    return traj;
}

void save_trajectory_meta(const Trajectory& traj, const SimSettings& settings,
                          const std::string& topology_file, const std::string& path) {
    nlohmann::ordered_json j;
    j["model"] = model_to_string(traj.spec.model);
    j["d"] = traj.d;
    j["n"] = traj.n;
    nlohmann::ordered_json params;
    for (auto& [k, v] : traj.spec.params) params[k] = v;
    j["params"] = params;
    nlohmann::ordered_json node_params;
    for (auto& [k, v] : traj.spec.node_params) node_params[k] = v;
    j["node_params"] = node_params;
    j["dt"] = settings.dt;
    j["t_inference"] = settings.t_inference;
    j["t_end"] = settings.t_end;
    j["seed"] = traj.seed;
    j["topology_file"] = topology_file;
    std::ofstream out(path);
    if (!out) throw StageError("save_trajectory_meta: cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace netdyn
