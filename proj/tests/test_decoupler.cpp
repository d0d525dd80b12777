#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "netdyn/common.hpp"
#include "netdyn/decoupler.hpp"
#include "netdyn/dynamics.hpp"
#include "netdyn/preprocess.hpp"

using namespace netdyn;
using Eigen::MatrixXd;

namespace {

// single linear layer acting as the identity (or a fixed matrix)
Mlp linear_net(const MatrixXd& W) {
    Mlp net;
    DenseLayer layer;
    layer.W = W;
    layer.bias = Eigen::RowVectorXd::Zero(W.cols());
    layer.activated = false;
    net.layers.push_back(layer);
    return net;
}

DecouplerModel tiny_model_1d() {
    DecouplerModel m;
    m.d = 1;
    m.self_nets.push_back(linear_net(MatrixXd::Identity(1, 1)));
    InteractionNets trio;
    MatrixXd w0(2, 1);
    w0 << 1.0, 1.0;  // g0(xi, xj) = xi + xj
    trio.g0 = linear_net(w0);
    trio.g1 = linear_net(MatrixXd::Identity(1, 1));
    trio.g2 = linear_net(MatrixXd::Identity(1, 1));
    m.inter_nets.push_back(trio);
    m.x_shift = Eigen::RowVectorXd::Zero(1);
    m.x_scale = Eigen::RowVectorXd::Ones(1);
    m.y_shift = Eigen::RowVectorXd::Zero(1);
    m.y_scale = Eigen::RowVectorXd::Ones(1);
    return m;
}

TrainingSet synthetic_set(int n, int d, size_t T,
                          const std::function<void(size_t, MatrixXd&, MatrixXd&)>& fill,
                          uint64_t seed) {
    TrainingSet ts;
    ts.n = n;
    ts.d = d;
    Rng rng(seed);
    for (size_t t = 0; t < T; ++t) {
        ts.times.push_back(double(t));
        MatrixXd x(n, d), y(n, d);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) x(i, k) = uniform_range(rng, -2.0, 2.0);
        fill(t, x, y);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                ts.states.push_back(x(i, k));
                ts.targets.push_back(y(i, k));
            }
        ts.is_train.push_back(t % 5 != 0);  // deterministic 80/20 split
    }
    return ts;
}

}  // namespace

TEST_SUITE("decoupler") {

TEST_CASE("rational activation published values") {
    RationalActivation act;
    CHECK(act.forward(0.0) == doctest::Approx(1.1915 / (1.0 + 2.3830)).epsilon(1e-12));
    RationalActivation zero;
    zero.a = {0, 0, 0, 0};
    for (double x : {-3.0, 0.0, 5.0}) CHECK(zero.forward(x) == 0.0);
}

TEST_CASE("rational activation bounded denominator, no NaN across wide grid") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        RationalActivation act;
        if (trial > 0)
            for (auto& c : act.a) c = gaussian(rng, 0, 2);
        for (double x = -1e6; x <= 1e6; x += 4e4) {
            const double q = act.b[0] + x * (act.b[1] + x * act.b[2]);
            CHECK(1.0 + std::abs(q) >= 1.0);
            CHECK(std::isfinite(act.forward(x)));
        }
    }
}

TEST_CASE("loss eq5 worked values") {
    MatrixXd target(2, 1), pred(2, 1);
    target << 1.0, 3.0;
    pred.setZero();
    CHECK(loss_eq5(pred, target, 0.0) == doctest::Approx(2.0));
    CHECK(loss_eq5(pred, target, 1.0, true) == doctest::Approx(3.0));
    CHECK(loss_eq5(target, target, 0.5) == doctest::Approx(0.0));
    MatrixXd one(1, 1);
    one << 1.0;
    CHECK_THROWS_AS(loss_eq5(one, one, 0.5), ConfigError);  // variance needs N >= 2
    MatrixXd bad(3, 1);
    CHECK_THROWS_AS(loss_eq5(bad, target, 0.0), ConfigError);
}

TEST_CASE("loss eq5 gradient matches central differences in both readings") {
    Rng rng(40);
    for (bool centered : {true, false}) {
        MatrixXd pred(4, 2), target(4, 2);
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 2; ++k) {
                pred(i, k) = gaussian(rng);
                target(i, k) = gaussian(rng);
            }
        MatrixXd g = loss_eq5_gradient(pred, target, 0.3, centered);
        const double h = 1e-6;
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 2; ++k) {
                MatrixXd p1 = pred, p2 = pred;
                p1(i, k) += h;
                p2(i, k) -= h;
                const double fd = (loss_eq5(p1, target, 0.3, centered) -
                                   loss_eq5(p2, target, 0.3, centered)) /
                                  (2 * h);
                CHECK(g(i, k) == doctest::Approx(fd).epsilon(1e-5));
            }
    }
}

TEST_CASE("predict on an empty graph is the self net alone") {
    auto m = tiny_model_1d();
    Topology empty(3);
    MatrixXd x(3, 1);
    x << 0.5, -1.0, 2.0;
    MatrixXd out = m.predict_derivative(empty, x);
    for (int i = 0; i < 3; ++i) CHECK(out(i, 0) == doctest::Approx(x(i, 0)));
}

TEST_CASE("zero-weight edges contribute nothing") {
    auto m = tiny_model_1d();
    Topology t(2);
    MatrixXd x(2, 1);
    x << 0.7, -0.3;
    MatrixXd base = m.predict_derivative(t, x);
    // a structural edge with zero weight is no edge at all
    Topology z(2);
    z.adjacency[1] = 0.0;
    MatrixXd same = m.predict_derivative(z, x);
    CHECK(base == same);
}

TEST_CASE("hand-computed two-node composition") {
    auto m = tiny_model_1d();
    Topology k2(2);
    k2.set_edge(0, 1, 1.0);
    MatrixXd x(2, 1);
    x << 0.5, 2.0;
    MatrixXd out = m.predict_derivative(k2, x);
    // pred_i = x_i + sum_j [ (x_i + x_j) + x_i * x_j ]
    CHECK(out(0, 0) == doctest::Approx(0.5 + (0.5 + 2.0) + 0.5 * 2.0));
    CHECK(out(1, 0) == doctest::Approx(2.0 + (2.0 + 0.5) + 2.0 * 0.5));
}

TEST_CASE("interaction term is additive over weight splits") {
    DecouplerConfig cfg;
    cfg.hidden = 6;
    cfg.seed = 4;
    auto ts = synthetic_set(4, 1, 8, [](size_t, MatrixXd& x, MatrixXd& y) { y = x; }, 7);
    Topology full(4);
    Rng rng(9);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) full.set_edge(i, j, uniform_range(rng, 0.5, 2.0));
    cfg.epochs = 3;
    auto trained = train_decoupler(ts, full, cfg).model;

    Topology a1(4), a2(4);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (full.has_edge(i, j)) {
                const double w = full.weight(i, j);
                const double split = 0.3 * w;
                a1.set_edge(i, j, split);
                a2.set_edge(i, j, w - split);
            }
    Topology empty(4);
    MatrixXd x(4, 1);
    x << 0.2, -0.4, 1.1, 0.8;
    MatrixXd self_only = trained.predict_derivative(empty, x);
    MatrixXd whole = trained.predict_derivative(full, x);
    MatrixXd part1 = trained.predict_derivative(a1, x);
    MatrixXd part2 = trained.predict_derivative(a2, x);
    MatrixXd recombined = part1 + part2 - self_only;
    for (int i = 0; i < 4; ++i)
        CHECK(whole(i, 0) == doctest::Approx(recombined(i, 0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    // small end-to-end composition: 2 nodes, one edge, hidden width 3
    const int n = 3, d = 1;
    Topology topo(n);
    topo.set_edge(0, 1, 1.3);
    topo.set_edge(1, 2, 0.7);
    auto ts = synthetic_set(n, d, 4,
                            [](size_t, MatrixXd& x, MatrixXd& y) {
                                y = (x.array() * 1.7 - 0.3).matrix();
                            },
                            21);
    DecouplerConfig cfg;
    cfg.hidden = 3;
    cfg.seed = 99;
    cfg.lambda = 0.1;
    cfg.standardize = false;
    cfg.epochs = 1;
    cfg.lr = 0.0;  // keep parameters at their initial values through the probe epoch
    auto model = train_decoupler(ts, topo, cfg).model;

    // finite-difference the training loss via a one-epoch zero-lr run is not
    // possible from outside, so rebuild the loss here from public pieces
    auto loss_of = [&](DecouplerModel& m) {
        double total = 0;
        size_t used = 0;
        for (size_t t = 0; t < ts.count(); ++t) {
            if (!ts.is_train[t]) continue;
            MatrixXd x(n, d), y(n, d);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < d; ++k) {
                    x(i, k) = ts.states[(t * n + i) * d + k];
                    y(i, k) = ts.targets[(t * n + i) * d + k];
                }
            total += loss_eq5(m.predict_derivative(topo, x), y, cfg.lambda, true);
            ++used;
        }
        return total / double(used);
    };

    // analytic gradient via a single AdamW probe step with known update rule
    // is indirect; instead check Mlp::backward against finite differences on
    // the full composition loss by perturbing every parameter
    std::vector<Mlp*> nets = {&model.self_nets[0], &model.inter_nets[0].g0,
                              &model.inter_nets[0].g1, &model.inter_nets[0].g2};

    // compute analytic grad by replaying one training step with lr=0 through
    // the internal path: easiest faithful route is finite differences vs the
    // backward-computed gradient of one more training epoch; train_decoupler
    // does not expose gradients, so assemble them via Mlp calls directly.
    const double h = 1e-5;
    // build the analytic gradient of loss_of w.r.t. each net's parameters via
    // the same public backward machinery used in training
    std::vector<std::vector<double>> analytic;
    {
        // forward pass with caches over all training timestamps at once
        std::vector<size_t> times;
        for (size_t t = 0; t < ts.count(); ++t)
            if (ts.is_train[t]) times.push_back(t);
        const size_t T = times.size();
        auto edges = topo.edges();
        MatrixXd self_in(T * n, d), e0(T * edges.size(), 2 * d), e1(T * edges.size(), d),
            e2(T * edges.size(), d);
        for (size_t q = 0; q < T; ++q) {
            for (int i = 0; i < n; ++i)
                self_in(q * n + i, 0) = ts.states[(times[q] * n + i) * d];
            for (size_t r = 0; r < edges.size(); ++r) {
                e0(q * edges.size() + r, 0) = ts.states[(times[q] * n + edges[r].dst) * d];
                e0(q * edges.size() + r, 1) = ts.states[(times[q] * n + edges[r].src) * d];
                e1(q * edges.size() + r, 0) = ts.states[(times[q] * n + edges[r].dst) * d];
                e2(q * edges.size() + r, 0) = ts.states[(times[q] * n + edges[r].src) * d];
            }
        }
        MlpCache c_self, c0, c1, c2;
        MatrixXd o_self = model.self_nets[0].forward_cached(self_in, c_self);
        MatrixXd o0 = model.inter_nets[0].g0.forward_cached(e0, c0);
        MatrixXd o1 = model.inter_nets[0].g1.forward_cached(e1, c1);
        MatrixXd o2 = model.inter_nets[0].g2.forward_cached(e2, c2);
        MatrixXd d_self = MatrixXd::Zero(T * n, d);
        MatrixXd d_g = MatrixXd::Zero(T * edges.size(), d);
        for (size_t q = 0; q < T; ++q) {
            MatrixXd pred(n, d), tgt(n, d);
            for (int i = 0; i < n; ++i) {
                pred(i, 0) = o_self(q * n + i, 0);
                tgt(i, 0) = ts.targets[(times[q] * n + i) * d];
            }
            for (size_t r = 0; r < edges.size(); ++r)
                pred(edges[r].dst, 0) +=
                    edges[r].weight *
                    (o0(q * edges.size() + r, 0) +
                     o1(q * edges.size() + r, 0) * o2(q * edges.size() + r, 0));
            // d loss_eq5 / d pred via finite differences on the slice keeps this
            // oracle independent of the implementation's closed-form gradient
            MatrixXd dpred(n, d);
            for (int i = 0; i < n; ++i) {
                MatrixXd p1 = pred, p2 = pred;
                p1(i, 0) += h;
                p2(i, 0) -= h;
                dpred(i, 0) = (loss_eq5(p1, tgt, cfg.lambda, true) -
                               loss_eq5(p2, tgt, cfg.lambda, true)) /
                              (2 * h) / double(T);
            }
            for (int i = 0; i < n; ++i) d_self(q * n + i, 0) = dpred(i, 0);
            for (size_t r = 0; r < edges.size(); ++r)
                d_g(q * edges.size() + r, 0) = edges[r].weight * dpred(edges[r].dst, 0);
        }
        auto g_self = model.self_nets[0].zero_grads();
        model.self_nets[0].backward(d_self, c_self, g_self);
        auto g0 = model.inter_nets[0].g0.zero_grads();
        model.inter_nets[0].g0.backward(d_g, c0, g0);
        auto g1 = model.inter_nets[0].g1.zero_grads();
        model.inter_nets[0].g1.backward(
            (d_g.array() * o2.array()).matrix(), c1, g1);
        auto g2 = model.inter_nets[0].g2.zero_grads();
        model.inter_nets[0].g2.backward(
            (d_g.array() * o1.array()).matrix(), c2, g2);
        const std::vector<std::vector<LayerGrad>*> gs = {&g_self, &g0, &g1, &g2};
        for (size_t m_i = 0; m_i < nets.size(); ++m_i) {
            std::vector<double> flat(nets[m_i]->num_params());
            nets[m_i]->flatten_grads(*gs[m_i], flat.data());
            analytic.push_back(std::move(flat));
        }
    }

    int total_params = 0;
    double worst_rel = 0.0;
    for (size_t m_i = 0; m_i < nets.size(); ++m_i) {
        Mlp* net = nets[m_i];
        std::vector<double> params(net->num_params());
        net->get_params(params.data());
        for (int p = 0; p < net->num_params(); ++p) {
            const double orig = params[p];
            params[p] = orig + h;
            net->set_params(params.data());
            const double fp = loss_of(model);
            params[p] = orig - h;
            net->set_params(params.data());
            const double fm = loss_of(model);
            params[p] = orig;
            net->set_params(params.data());
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[m_i][p];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            worst_rel = std::max(worst_rel, std::abs(fd - an) / denom);
            ++total_params;
        }
    }
    CHECK(total_params > 10);
    CHECK(worst_rel < 1e-4);
}

TEST_CASE("training fits the zero target") {
    auto ts = synthetic_set(5, 1, 40,
                            [](size_t, MatrixXd&, MatrixXd& y) { y.setZero(); }, 31);
    auto topo = gen_er(5, 0.4, 2);
    DecouplerConfig cfg;
    cfg.hidden = 10;
    cfg.epochs = 200;
    cfg.lr = 5e-3;
    cfg.seed = 8;
    cfg.standardize = false;
    auto result = train_decoupler(ts, topo, cfg);
    CHECK(result.best_val < 1e-3);
    MatrixXd x(5, 1);
    x << 0.1, -0.5, 1.0, -1.5, 2.0;
    MatrixXd out = result.model.predict_derivative(topo, x);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(out(i, 0)) < 0.05);
}

TEST_CASE("training recovers a pure self law on an empty graph") {
    auto ts = synthetic_set(6, 1, 60,
                            [](size_t, MatrixXd& x, MatrixXd& y) { y = -x; }, 77);
    Topology empty(6);
    DecouplerConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 600;
    cfg.patience = 600;
    cfg.lr = 8e-3;
    cfg.seed = 15;
    auto result = train_decoupler(ts, empty, cfg);
    MatrixXd grid(41, 1);
    for (int i = 0; i <= 40; ++i) grid(i, 0) = -2.0 + 0.1 * i;
    MatrixXd out = result.model.query_self(0, grid);
    double max_err = 0;
    for (int i = 0; i <= 40; ++i) max_err = std::max(max_err, std::abs(out(i, 0) + grid(i, 0)));
    CHECK(max_err < 0.05);
}

TEST_CASE("epidemic decoupling at desk scale") {
    // slow-converging L1 objective: the sub-1e-3 validation loss needs the
    // long schedule, so this is the one multi-minute case in the suite
    DynamicsSpec epi;
    epi.model = Model::Epi;
    auto topo = gen_er(20, 0.2, 51);
    SimSettings s = default_sim_settings(Model::Epi);
    auto traj = simulate_dataset(epi, topo, s.init, s, 5).head(0.5);
    auto ts = build_training_pairs(traj, topo, full_interval(traj, 4), {}, 3, 0.2);
    DecouplerConfig cfg;
    cfg.hidden = 32;
    cfg.epochs = 4500;
    cfg.patience = 4500;
    cfg.lr = 0.015;
    cfg.seed = 12;
    auto result = train_decoupler(ts, topo, cfg);
    CHECK(result.best_val < 1e-3);  // standardised target scale

    // decoupled interaction should match x_j * (1 - x_i)
    Rng rng(64);
    MatrixXd grid(200, 2);
    for (int r = 0; r < 200; ++r) {
        grid(r, 0) = uniform_range(rng, 0.05, 0.95);
        grid(r, 1) = uniform_range(rng, 0.05, 0.95);
    }
    MatrixXd got = result.model.query_inter(0, grid);
    Eigen::VectorXd truth(200);
    for (int r = 0; r < 200; ++r) truth(r) = grid(r, 1) * (1.0 - grid(r, 0));
    const double mean = truth.mean();
    const double ss_tot = (truth.array() - mean).square().sum();
    const double ss_res = (truth - got.col(0)).squaredNorm();
    CHECK(1.0 - ss_res / ss_tot > 0.95);
}

TEST_CASE("checkpoint json round trip is bit exact") {
    auto ts = synthetic_set(4, 2, 10,
                            [](size_t, MatrixXd& x, MatrixXd& y) { y = 0.5 * x; }, 3);
    auto topo = gen_er(4, 0.5, 7);
    DecouplerConfig cfg;
    cfg.hidden = 5;
    cfg.epochs = 5;
    cfg.seed = 2;
    auto model = train_decoupler(ts, topo, cfg).model;
    const auto file = (std::filesystem::temp_directory_path() / "netdyn_ckpt.json").string();
    model.save(file);
    auto back = DecouplerModel::load(file);
    CHECK(back.to_json() == model.to_json());
    MatrixXd x(4, 2);
    x << 0.1, 0.2, -0.3, 0.4, 0.9, -1.2, 0.0, 0.5;
    MatrixXd a = model.predict_derivative(topo, x);
    MatrixXd b = back.predict_derivative(topo, x);
    CHECK(a == b);
}

TEST_CASE("node permutation leaves the training loss unchanged") {
    const int n = 6;
    auto fill = [](size_t, MatrixXd& x, MatrixXd& y) { y = (x.array().square()).matrix(); };
    auto ts = synthetic_set(n, 1, 12, fill, 19);
    Topology topo(n);
    topo.set_edge(0, 1, 1.0);
    topo.set_edge(2, 3, 1.0);
    topo.set_edge(4, 5, 1.0);
    DecouplerConfig cfg;
    cfg.hidden = 8;
    cfg.epochs = 30;
    cfg.seed = 5;
    auto base = train_decoupler(ts, topo, cfg);

    // permute node labels consistently (swap 0<->2, 1<->3)
    std::vector<int> perm = {2, 3, 0, 1, 4, 5};
    TrainingSet pts = ts;
    for (size_t t = 0; t < ts.count(); ++t)
        for (int i = 0; i < n; ++i) {
            pts.states[t * n + perm[i]] = ts.states[t * n + i];
            pts.targets[t * n + perm[i]] = ts.targets[t * n + i];
        }
    Topology ptopo(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (topo.has_edge(i, j)) ptopo.set_edge(perm[i], perm[j], 1.0);
    auto permuted = train_decoupler(pts, ptopo, cfg);
    CHECK(permuted.log.back().train_loss ==
          doctest::Approx(base.log.back().train_loss).epsilon(1e-9));
}

TEST_CASE("non-finite loss aborts with the epoch number") {
    auto ts = synthetic_set(3, 1, 6,
                            [](size_t, MatrixXd&, MatrixXd& y) { y.setConstant(1.0); }, 1);
    Topology topo(3);
    topo.set_edge(0, 1, 1.0);
    DecouplerConfig cfg;
    cfg.hidden = 4;
    cfg.epochs = 50;
    cfg.lr = 1e18;  // guaranteed blow-up
    cfg.seed = 1;
    cfg.standardize = false;
    try {
        train_decoupler(ts, topo, cfg);
        FAIL("expected abort");
    } catch (const StageError& ex) {
        CHECK(std::string(ex.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("empty training split is rejected") {
    TrainingSet ts;
    ts.n = 2;
    ts.d = 1;
    Topology topo(2);
    DecouplerConfig cfg;
    CHECK_THROWS_AS(train_decoupler(ts, topo, cfg), ConfigError);
}

}  // TEST_SUITE
