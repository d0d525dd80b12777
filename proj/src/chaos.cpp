#include "netdyn/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "netdyn/common.hpp"

namespace netdyn {

std::vector<Crossing> poincare_section(const RhsFn& rhs, int n, int d,
                                       std::span<const double> x0, const SectionConfig& cfg,
                                       double t_end, double dt_out, double rtol, double atol) {
    if (cfg.node < 0 || cfg.node >= n || cfg.dim < 0 || cfg.dim >= d)
        throw ConfigError("poincare_section: node/dim out of range");
    if (!(cfg.transient < t_end))
        throw ConfigError("poincare_section: transient must be below t_end");
    Trajectory traj = integrate_ivp(rhs, n, d, x0, t_end, dt_out, rtol, atol);

    std::vector<Crossing> out;
    const size_t stride = size_t(n) * d;
    auto g = [&](size_t t) {
        return traj.states[t * stride + size_t(cfg.node) * d + cfg.dim] - cfg.value;
    };
    for (size_t t = 0; t + 1 < traj.samples(); ++t) {
        if (traj.times[t] < cfg.transient) continue;
        const double g0 = g(t), g1 = g(t + 1);
        const bool rising = g0 < 0.0 && g1 >= 0.0;
        const bool falling = g0 > 0.0 && g1 <= 0.0;
        bool hit = false;
        switch (cfg.direction) {
            case SectionConfig::Direction::Rising: hit = rising; break;
            case SectionConfig::Direction::Falling: hit = falling; break;
            case SectionConfig::Direction::Both: hit = rising || falling; break;
        }
        if (!hit) continue;
        const double theta = g0 / (g0 - g1);
        Crossing c;
        c.t = traj.times[t] + theta * dt_out;
        c.state.resize(d);
        for (int k = 0; k < d; ++k) {
            const double a = traj.states[t * stride + size_t(cfg.node) * d + k];
            const double b = traj.states[(t + 1) * stride + size_t(cfg.node) * d + k];
            c.state[k] = a + theta * (b - a);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<BifurcationRow> bifurcation_scan(const std::function<RhsFn(double)>& family,
                                             int n, int d, double c_lo, double c_hi,
                                             int c_steps, const SectionConfig& cfg,
                                             const ScanSettings& settings) {
    if (c_steps < 2) throw ConfigError("bifurcation_scan: c_steps must be >= 2");
    if (settings.record_dim < 0 || settings.record_dim >= d)
        throw ConfigError("bifurcation_scan: record_dim out of range");
    std::vector<BifurcationRow> rows;
    for (int s = 0; s < c_steps; ++s) {
        BifurcationRow row;
        row.c = c_lo + (c_hi - c_lo) * s / double(c_steps - 1);
        try {
            auto crossings = poincare_section(family(row.c), n, d, settings.x0, cfg,
                                              settings.t_end, settings.dt_out, settings.rtol,
                                              settings.atol);
            for (const auto& c : crossings) row.values.push_back(c.state[settings.record_dim]);
        } catch (const std::exception& ex) {
            row.ok = false;
            row.error = ex.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int count_clusters(std::vector<double> values, double gap_fraction) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    const double range = values.back() - values.front();
    if (range == 0.0) return 1;
    const double gap = gap_fraction * range;
    int clusters = 1;
    for (size_t i = 1; i < values.size(); ++i)
        if (values[i] - values[i - 1] > gap) ++clusters;
    return clusters;
}

int count_distinct(std::vector<double> values, double tol) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    int distinct = 1;
    double anchor = values.front();
    for (double v : values)
        if (v - anchor > tol) {
            ++distinct;
            anchor = v;
        }
    return distinct;
}

void save_bifurcation_csv(const std::vector<BifurcationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageError("save_bifurcation_csv: cannot write " + path);
    out << "c,value\n";
    char buf[64];
    for (const auto& row : rows)
        for (double v : row.values) {
            snprintf(buf, sizeof buf, "%.17g,%.17g\n", row.c, v);
            out << buf;
        }
}

}  // namespace netdyn
