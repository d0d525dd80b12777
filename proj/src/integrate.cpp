#include <algorithm>
#include <cmath>
#include <vector>

#include "netdyn/common.hpp"
#include "netdyn/dynamics.hpp"

namespace netdyn {

namespace {

// Dormand-Prince 5(4) tableau with the quartic dense-output interpolant.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;

constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                 A64 = 49.0 / 176, A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
// error weights: 5th-order solution minus the embedded 4th-order one
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                 E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;

// interpolant matrix P: y(t0 + th*h) = y0 + h * K^T P [th, th^2, th^3, th^4]
constexpr double P[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0}};

struct Dopri5 {
    const RhsFn& f;
    size_t m;  // system size
    double rtol, atol;
    std::vector<double> k1, k2, k3, k4, k5, k6, k7, ytmp;

    Dopri5(const RhsFn& f_, size_t m_, double rtol_, double atol_)
        : f(f_), m(m_), rtol(rtol_), atol(atol_), k1(m_), k2(m_), k3(m_), k4(m_), k5(m_),
          k6(m_), k7(m_), ytmp(m_) {}

    // one trial step from (t, y) with k1 = f(t, y) already filled; on success
    // ynew and k7 = f(t+h, ynew) are valid (FSAL)
    double attempt(double t, const std::vector<double>& y, double h, std::vector<double>& ynew) {
        for (size_t i = 0; i < m; ++i) ytmp[i] = y[i] + h * A21 * k1[i];
        f(t + C2 * h, ytmp, k2);
        for (size_t i = 0; i < m; ++i) ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        f(t + C3 * h, ytmp, k3);
        for (size_t i = 0; i < m; ++i)
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        f(t + C4 * h, ytmp, k4);
        for (size_t i = 0; i < m; ++i)
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        f(t + C5 * h, ytmp, k5);
        for (size_t i = 0; i < m; ++i)
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] +
                                  A65 * k5[i]);
        f(t + h, ytmp, k6);
        for (size_t i = 0; i < m; ++i)
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        f(t + h, ynew, k7);
        double err = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] +
                                  E6 * k6[i] + E7 * k7[i]);
            const double sk = atol + rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double q = e / sk;
            err += q * q;
        }
        return std::sqrt(err / m);
    }

    void dense(double th, double h, const std::vector<double>& y0, std::vector<double>& out) const {
        const double th2 = th * th, th3 = th2 * th, th4 = th3 * th;
        double w[7];
        const double* ks[7] = {k1.data(), k2.data(), k3.data(), k4.data(),
                               k5.data(), k6.data(), k7.data()};
        for (int s = 0; s < 7; ++s)
            w[s] = P[s][0] * th + P[s][1] * th2 + P[s][2] * th3 + P[s][3] * th4;
        for (size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int s = 0; s < 7; ++s) acc += w[s] * ks[s][i];
            out[i] = y0[i] + h * acc;
        }
    }

    double initial_step(double t0, const std::vector<double>& y0, double t_end) {
        // standard two-stage heuristic
        double d0 = 0.0, d1 = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double sk = atol + rtol * std::abs(y0[i]);
            d0 += (y0[i] / sk) * (y0[i] / sk);
            d1 += (k1[i] / sk) * (k1[i] / sk);
        }
        d0 = std::sqrt(d0 / m);
        d1 = std::sqrt(d1 / m);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, t_end - t0);
        for (size_t i = 0; i < m; ++i) ytmp[i] = y0[i] + h0 * k1[i];
        f(t0 + h0, ytmp, k2);
        double d2 = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double sk = atol + rtol * std::abs(y0[i]);
            const double q = (k2[i] - k1[i]) / sk;
            d2 += q * q;
        }
        d2 = std::sqrt(d2 / m) / h0;
        double h1 = std::max(d1, d2) <= 1e-15
                        ? std::max(1e-6, h0 * 1e-3)
                        : std::pow(0.01 / std::max(d1, d2), 0.2);
        return std::min({100.0 * h0, h1, t_end - t0});
    }
};

}  // namespace

Trajectory integrate_ivp(const RhsFn& rhs, int n, int d, std::span<const double> x0,
                         double t_end, double dt_out, double rtol, double atol) {
    if (!(dt_out > 0.0)) throw ConfigError("integrate_ivp: dt_out must be > 0");
    if (!(t_end >= dt_out)) throw ConfigError("integrate_ivp: t_end must be >= dt_out");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("integrate_ivp: tolerances must be > 0");
    if (x0.size() != size_t(n) * d) throw ConfigError("integrate_ivp: x0 shape mismatch");

    const size_t m = x0.size();
    size_t n_out = size_t(std::floor(t_end / dt_out + 1e-9)) + 1;

    Trajectory traj;
    traj.n = n;
    traj.d = d;
    traj.times.resize(n_out);
    for (size_t k = 0; k < n_out; ++k) traj.times[k] = k * dt_out;
    traj.states.resize(n_out * m);

    std::vector<double> y(x0.begin(), x0.end());
    std::copy(y.begin(), y.end(), traj.states.begin());

    Dopri5 st(rhs, m, rtol, atol);
    double t = 0.0;
    rhs(t, y, st.k1);
    double h = st.initial_step(t, y, t_end);

    std::vector<double> ynew(m), interp(m);
    size_t next_out = 1;
    const double safety = 0.9, min_fac = 0.2, max_fac = 10.0;
    long long nsteps = 0;

    while (next_out < n_out) {
        if (!(h > 0.0) || t + h == t)
            throw StageError("integrate_ivp: step size underflow at t = " + std::to_string(t));
        if (++nsteps > 200000000LL)
            throw StageError("integrate_ivp: step budget exhausted at t = " + std::to_string(t));
        if (t + h > t_end) h = t_end - t;
        const double err = st.attempt(t, y, h, ynew);
        if (err <= 1.0) {
            // emit every grid point inside (t, t+h]
            while (next_out < n_out && traj.times[next_out] <= t + h + 1e-14 * t_end) {
                const double th = std::clamp((traj.times[next_out] - t) / h, 0.0, 1.0);
                st.dense(th, h, y, interp);
                std::copy(interp.begin(), interp.end(),
                          traj.states.begin() + next_out * m);
                ++next_out;
            }
            t += h;
            y.swap(ynew);
            st.k1.swap(st.k7);  // FSAL
            const double fac = err == 0.0 ? max_fac
                                          : std::clamp(safety * std::pow(err, -0.2), min_fac, max_fac);
            h *= fac;
        } else {
            h *= std::max(min_fac, safety * std::pow(err, -0.2));
        }
        for (double v : y)
            if (!std::isfinite(v))
                throw StageError("integrate_ivp: non-finite state (blow-up) at t = " +
                                 std::to_string(t));
    }
    return traj;
}

Trajectory integrate_ivp(const DynamicsSpec& spec, const Topology& topo,
                         std::span<const double> x0, double t_end, double dt_out,
                         double rtol, double atol) {
    auto rhs = make_rhs(spec, topo);
    if (!rhs) throw ConfigError("integrate_ivp: missing rhs");
    Trajectory traj = integrate_ivp(rhs, topo.n, spec.d, x0, t_end, dt_out, rtol, atol);
    traj.spec = spec;
    return traj;
}

}  // namespace netdyn
