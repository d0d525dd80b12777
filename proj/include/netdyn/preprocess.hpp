#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netdyn/dynamics.hpp"
#include "netdyn/topology.hpp"

namespace netdyn {

struct IntervalChoice {
    double t_star = 0.0;      // selected end time, snapped to the trajectory grid
    int s_steps = 0;          // requested sample-step count
    double delta_t = 0.0;     // stride * base dt
    double objective_value = 0.0;
    int stride = 1;           // subsampling stride on the base grid
    int grid_count = 0;       // points on the selected grid (incl. both ends)
};

struct SaConfig {
    double t0 = -1.0;   // initial temperature; <0 = auto from 20 random probes
    double cooling = 0.95;
    int iters = 200;
    uint64_t seed = 0;
};

/// Minimise the interval objective over the window end T by simulated
/// annealing on the trajectory grid. The objective sums squared jumps of
/// consecutive derivative samples plus lambda times the deviation of the
/// trailing 10 samples from the window-end derivative.
IntervalChoice select_interval(const Trajectory& traj, int s_steps, double lambda,
                               const SaConfig& sa);

/// Same objective evaluated at a given window end (oracle / diagnostics).
double interval_objective(const Trajectory& traj, double t_star, int s_steps, double lambda);

std::vector<double> sg_smooth(std::span<const double> series, int window, int polyorder);

/// Interior: (x(t-2h) - 8x(t-h) + 8x(t+h) - x(t+2h)) / 12h. The two samples at
/// each end use one-sided fourth-order stencils and are flagged as boundary.
std::vector<double> five_point_derivative(std::span<const double> series, double delta_t,
                                          std::vector<uint8_t>* boundary_flags = nullptr);

struct SmoothConfig {
    bool enabled = false;  // off for clean synthetic data
    int window = 7;
    int polyorder = 3;
};

/// Training data on the selected window: per retained timestamp the full
/// smoothed state frame and its derivative target, with a train/val tag.
struct TrainingSet {
    int n = 0, d = 0;
    std::vector<double> times;
    std::vector<double> states;   // times.size() * n * d
    std::vector<double> targets;  // same layout
    std::vector<uint8_t> is_train;    // per timestamp
    std::vector<uint8_t> is_boundary; // per timestamp (empty when interior-only)

    size_t count() const { return times.size(); }
    size_t train_count() const;
    std::span<const double> frame(size_t t) const {
        return {states.data() + t * size_t(n) * d, size_t(n) * d};
    }
    std::span<const double> target_frame(size_t t) const {
        return {targets.data() + t * size_t(n) * d, size_t(n) * d};
    }
};

TrainingSet build_training_pairs(const Trajectory& traj, const Topology& topo,
                                 const IntervalChoice& choice, const SmoothConfig& smooth,
                                 uint64_t split_seed, double val_ratio = 0.2,
                                 bool interior_only = true);

IntervalChoice full_interval(const Trajectory& traj, int stride = 1);

void save_training_csv(const TrainingSet& ts, const std::string& path);

}  // namespace netdyn
