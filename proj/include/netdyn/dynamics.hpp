#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "netdyn/topology.hpp"

namespace netdyn {

enum class Model {
    Bio, Gene, MI, LV, Neur, Epi, Kuramoto, FHN, PredatorPrey, Lorenz, Rossler, Custom
};

Model model_from_string(const std::string& name);
std::string model_to_string(Model m);
int model_dim(Model m);

/// RHS callable: reads state (n*d, row-major by node) and writes the
/// derivative in place; time enters explicitly for generality although the
/// built-in systems are autonomous.
using RhsFn = std::function<void(double t, std::span<const double> state, std::span<double> deriv)>;

struct DynamicsSpec {
    Model model = Model::LV;
    int d = 1;

    DynamicsSpec() = default;
    explicit DynamicsSpec(Model m) : model(m), d(model_dim(m)) {}
    std::map<std::string, double> params;                    // defaults applied on use
    std::map<std::string, std::vector<double>> node_params;  // e.g. Kuramoto omega
    RhsFn custom;                                            // Model::Custom only

    double param(const std::string& name) const;  // value with model default fallback
};

std::map<std::string, double> default_params(Model m);

struct InitSpec {
    enum class Kind { Uniform, Gaussian, Constant } kind = Kind::Uniform;
    double lo = 0.0, hi = 1.0;  // Uniform
    double mu = 0.0, sigma = 1.0;
    double value = 0.0;
};

/// Per-model simulation settings: initial-condition law, output spacing and
/// the inference / prediction end times.
struct SimSettings {
    InitSpec init;
    double dt = 0.01;
    double t_inference = 1.0;
    double t_end = 5.0;
    double rtol = 1e-12;
    double atol = 1e-12;
};

SimSettings default_sim_settings(Model m);

struct Trajectory {
    std::vector<double> times;   // uniform grid starting at 0
    std::vector<double> states;  // times.size() * n * d, row-major (t, node, dim)
    int n = 0;
    int d = 0;
    DynamicsSpec spec;
    uint64_t seed = 0;

    size_t samples() const { return times.size(); }
    double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
    double duration() const { return times.empty() ? 0.0 : times.back(); }
    double value(size_t t, int node, int dim) const {
        return states[(t * n + node) * d + dim];
    }
    std::span<const double> frame(size_t t) const {
        return {states.data() + t * size_t(n) * d, size_t(n) * d};
    }
    /// Restrict to grid points with time <= t_max.
    Trajectory head(double t_max) const;
};

std::vector<double> builtin_rhs(const DynamicsSpec& spec, const Topology& topo,
                                std::span<const double> state, double t);
RhsFn make_rhs(const DynamicsSpec& spec, const Topology& topo);

/// Adaptive Dormand-Prince 5(4) with dense output on a uniform grid.
Trajectory integrate_ivp(const RhsFn& rhs, int n, int d, std::span<const double> x0,
                         double t_end, double dt_out, double rtol = 1e-12, double atol = 1e-12);
Trajectory integrate_ivp(const DynamicsSpec& spec, const Topology& topo,
                         std::span<const double> x0, double t_end, double dt_out,
                         double rtol = 1e-12, double atol = 1e-12);

Trajectory simulate_dataset(const DynamicsSpec& spec, const Topology& topo,
                            const InitSpec& init, const SimSettings& settings, uint64_t seed);

/// Multiplicative white Gaussian observation noise calibrated so that the
/// measured signal-to-noise ratio matches snr_db in expectation; an infinite
/// snr_db returns the trajectory unchanged.
Trajectory add_state_noise(const Trajectory& traj, double snr_db, uint64_t seed);

void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);
void save_trajectory_meta(const Trajectory& traj, const SimSettings& settings,
                          const std::string& topology_file, const std::string& path);

/// Fully connected heterogeneous topology for the pursuit system: node 0 is
/// the predator (type 0), the rest prey (type 1); edge types 0: prey->predator
/// influence, 1: predator->prey, 2: prey->prey.
Topology make_predator_prey_topology(int n);

}  // namespace netdyn
