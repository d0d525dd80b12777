#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "netdyn/dynamics.hpp"

namespace netdyn {

struct SectionConfig {
    int node = 0;        // node whose state defines the section
    int dim = 0;         // crossing dimension
    double value = 0.0;  // crossing value
    enum class Direction { Rising, Falling, Both } direction = Direction::Rising;
    double transient = 0.0;  // time discarded before recording crossings
};

struct Crossing {
    double t = 0.0;
    std::vector<double> state;  // the node's d-dimensional state, interpolated
};

/// Directed crossings of the section after the transient; states are linearly
/// interpolated between output grid samples. An empty result is a valid
/// outcome (no crossings found).
std::vector<Crossing> poincare_section(const RhsFn& rhs, int n, int d,
                                       std::span<const double> x0, const SectionConfig& cfg,
                                       double t_end, double dt_out, double rtol = 1e-9,
                                       double atol = 1e-9);

struct BifurcationRow {
    double c = 0.0;
    std::vector<double> values;  // recorded dimension at each crossing
    bool ok = true;
    std::string error;
};

struct ScanSettings {
    std::vector<double> x0;  // initial state, reused for every c
    double t_end = 400.0;
    double dt_out = 0.01;
    double rtol = 1e-9;
    double atol = 1e-9;
    int record_dim = 1;  // state dimension collected at crossings
};

/// Sweep the family parameter and collect section values per c; integration
/// failures are recorded on the row and the scan continues.
std::vector<BifurcationRow> bifurcation_scan(const std::function<RhsFn(double)>& family,
                                             int n, int d, double c_lo, double c_hi,
                                             int c_steps, const SectionConfig& cfg,
                                             const ScanSettings& settings);

/// 1-D agglomerative cluster count: sorted values split where the gap between
/// neighbours exceeds gap_fraction of the value range.
int count_clusters(std::vector<double> values, double gap_fraction = 0.05);

/// Number of distinct values at an absolute resolution; separates a dense
/// chaotic band from a finite periodic set.
int count_distinct(std::vector<double> values, double tol);

void save_bifurcation_csv(const std::vector<BifurcationRow>& rows, const std::string& path);

}  // namespace netdyn
