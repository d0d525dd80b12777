#include "netdyn/decoupler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "netdyn/common.hpp"
#include "json.hpp"

namespace netdyn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

inline double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

double loss_eq5(const MatrixXd& pred, const MatrixXd& target, double lambda,
                bool variance_centered) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ConfigError("loss_eq5: shape mismatch");
    const int n = int(pred.rows()), d = int(pred.cols());
    if (lambda > 0 && n < 2) throw ConfigError("loss_eq5: variance term requires N >= 2");
    const MatrixXd r = target - pred;
    double l1 = r.array().abs().sum();
    double var_term = 0.0;
    if (lambda > 0) {
        Eigen::VectorXd s = r.array().abs().matrix().rowwise().sum();
        if (variance_centered) {
            const double mean = s.mean();
            var_term = (s.array() - mean).square().sum() / (n - 1);
        } else {
            Eigen::VectorXd m = r.rowwise().mean();
            var_term = (s + m).array().square().sum() / (n - 1);
        }
    }
    return (l1 + lambda * var_term) / (double(n) * d);
}

// dL/dpred for one time slice; mirrors loss_eq5
MatrixXd loss_eq5_gradient(const MatrixXd& pred, const MatrixXd& target, double lambda,
                           bool variance_centered) {
    const int n = int(pred.rows()), d = int(pred.cols());
    const MatrixXd r = target - pred;
    MatrixXd g(n, d);
    const double norm = 1.0 / (double(n) * d);
    Eigen::VectorXd s = r.array().abs().matrix().rowwise().sum();
    if (lambda > 0 && variance_centered) {
        const double mean = s.mean();
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                const double sg = sgn(r(i, k));
                g(i, k) = norm * (-sg - lambda * 2.0 / (n - 1) * (s(i) - mean) * sg);
            }
    } else if (lambda > 0) {
        Eigen::VectorXd m = r.rowwise().mean();
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                const double sg = sgn(r(i, k));
                g(i, k) = norm * (-sg + lambda * 2.0 / (n - 1) * (s(i) + m(i)) *
                                            (-sg - 1.0 / d));
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) g(i, k) = -norm * sgn(r(i, k));
    }
    return g;
}

namespace {

struct EdgeSample {
    int dst, src;
    double w;
};

// Sample layout shared by training and prediction: per node type the rows of
// the self-net batch, per edge type the rows of the interaction batch; both
// ordered by timestamp so minibatches are contiguous row ranges.
struct BatchLayout {
    std::vector<std::vector<int>> nodes_of_type;           // observed nodes per type
    std::vector<std::vector<EdgeSample>> edges_of_type;    // observed edges per type
    std::vector<int> node_pos;                             // node -> position in its type list
};

BatchLayout make_layout(const Topology& topo, const ObservationMask& mask, int d) {
    BatchLayout lay;
    const int K = topo.num_node_types();
    const int E = topo.num_edge_types();
    lay.nodes_of_type.resize(K);
    lay.edges_of_type.resize(E);
    lay.node_pos.assign(topo.n, -1);
    std::vector<char> observed(topo.n, 1);
    for (int i = 0; i < topo.n; ++i)
        observed[i] = mask.node_observed(i, d) ? 1 : 0;
    for (int i = 0; i < topo.n; ++i)
        if (observed[i]) {
            lay.node_pos[i] = int(lay.nodes_of_type[topo.node_type[i]].size());
            lay.nodes_of_type[topo.node_type[i]].push_back(i);
        }
    for (const auto& e : topo.edges())
        if (observed[e.dst] && observed[e.src] && mask.edge_observed(e.dst, e.src, topo.n))
            lay.edges_of_type[e.type].push_back({e.dst, e.src, e.weight});
    return lay;
}

}  // namespace

MatrixXd DecouplerModel::predict_derivative(const Topology& topo, const MatrixXd& state,
                                            const ObservationMask& mask) const {
    if (state.rows() != topo.n || state.cols() != d)
        throw ConfigError("predict_derivative: state shape mismatch");
    MatrixXd xs = state;
    for (int k = 0; k < d; ++k)
        xs.col(k) = (xs.col(k).array() - x_shift(k)) / x_scale(k);

    MatrixXd out = MatrixXd::Zero(topo.n, d);
    BatchLayout lay = make_layout(topo, mask, d);
    for (int k = 0; k < int(lay.nodes_of_type.size()); ++k) {
        const auto& nodes = lay.nodes_of_type[k];
        if (nodes.empty()) continue;
        MatrixXd in(nodes.size(), d);
        for (size_t r = 0; r < nodes.size(); ++r) in.row(r) = xs.row(nodes[r]);
        MatrixXd y = self_nets[std::min(k, num_node_types() - 1)].forward(in);
        for (size_t r = 0; r < nodes.size(); ++r) out.row(nodes[r]) = y.row(r);
    }
    for (int e = 0; e < int(lay.edges_of_type.size()); ++e) {
        const auto& edges = lay.edges_of_type[e];
        if (edges.empty()) continue;
        const auto& nets = inter_nets[std::min(e, num_edge_types() - 1)];
        MatrixXd in0(edges.size(), 2 * d), in1(edges.size(), d), in2(edges.size(), d);
        for (size_t r = 0; r < edges.size(); ++r) {
            in0.block(r, 0, 1, d) = xs.row(edges[r].dst);
            in0.block(r, d, 1, d) = xs.row(edges[r].src);
            in1.row(r) = xs.row(edges[r].dst);
            in2.row(r) = xs.row(edges[r].src);
        }
        MatrixXd g = nets.g0.forward(in0) +
                     (nets.g1.forward(in1).array() * nets.g2.forward(in2).array()).matrix();
        for (size_t r = 0; r < edges.size(); ++r)
            out.row(edges[r].dst) += edges[r].w * g.row(r);
    }
    for (int k = 0; k < d; ++k)
        out.col(k) = y_shift(k) + y_scale(k) * out.col(k).array();
    return out;
}

MatrixXd DecouplerModel::query_self(int node_type, const MatrixXd& grid) const {
    if (grid.rows() == 0) throw ConfigError("query_self: empty grid");
    MatrixXd xs = grid;
    for (int k = 0; k < d; ++k)
        xs.col(k) = (xs.col(k).array() - x_shift(k)) / x_scale(k);
    MatrixXd y = self_nets.at(node_type).forward(xs);
    for (int k = 0; k < d; ++k) y.col(k) = y_shift(k) + y_scale(k) * y.col(k).array();
    return y;
}

MatrixXd DecouplerModel::query_inter(int edge_type, const MatrixXd& pair_grid) const {
    if (pair_grid.rows() == 0) throw ConfigError("query_inter: empty grid");
    if (pair_grid.cols() != 2 * d) throw ConfigError("query_inter: grid must have 2d columns");
    MatrixXd xs = pair_grid;
    for (int k = 0; k < 2 * d; ++k)
        xs.col(k) = (xs.col(k).array() - x_shift(k % d)) / x_scale(k % d);
    const auto& nets = inter_nets.at(edge_type);
    MatrixXd y = nets.g0.forward(xs) + (nets.g1.forward(xs.leftCols(d)).array() *
                                        nets.g2.forward(xs.rightCols(d)).array())
                                           .matrix();
    for (int k = 0; k < d; ++k) y.col(k) = y_scale(k) * y.col(k).array();
    return y;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct FlatParams {
    std::vector<Mlp*> nets;
    int total = 0;
    std::vector<int> offsets;

    explicit FlatParams(DecouplerModel& model) {
        for (auto& net : model.self_nets) nets.push_back(&net);
        for (auto& trio : model.inter_nets) {
            nets.push_back(&trio.g0);
            nets.push_back(&trio.g1);
            nets.push_back(&trio.g2);
        }
        for (auto* net : nets) {
            offsets.push_back(total);
            total += net->num_params();
        }
    }
    void gather(Eigen::VectorXd& out) const {
        out.resize(total);
        for (size_t i = 0; i < nets.size(); ++i) nets[i]->get_params(out.data() + offsets[i]);
    }
    void scatter(const Eigen::VectorXd& in) {
        for (size_t i = 0; i < nets.size(); ++i) nets[i]->set_params(in.data() + offsets[i]);
    }
    void decay_mask(Eigen::VectorXd& out) const {
        out.resize(total);
        for (size_t i = 0; i < nets.size(); ++i) nets[i]->decay_mask(out.data() + offsets[i]);
    }
};

struct AdamW {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, wd;
    Eigen::VectorXd m, v, mask;
    long step_count = 0;

    AdamW(int n, double lr_, double wd_, const Eigen::VectorXd& decay_mask)
        : lr(lr_), wd(wd_), m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)),
          mask(decay_mask) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        ++step_count;
        m = beta1 * m + (1 - beta1) * grad;
        v = beta2 * v + (1 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1 - std::pow(beta1, step_count);
        const double bc2 = 1 - std::pow(beta2, step_count);
        params -= lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + eps)).matrix();
        params -= (lr * wd) * params.cwiseProduct(mask);  // decoupled decay on weights
    }
};

}  // namespace

TrainResult train_decoupler(const TrainingSet& ts, const Topology& topo,
                            const DecouplerConfig& cfg, const ObservationMask& mask) {
    if (ts.count() == 0 || ts.train_count() == 0)
        throw ConfigError("train_decoupler: empty training split");
    const int n = ts.n, d = ts.d;
    const int K = topo.num_node_types();
    const int E = topo.num_edge_types();

    DecouplerModel model;
    model.d = d;
    model.lambda = cfg.lambda;
    model.variance_centered = cfg.variance_centered;
    for (int k = 0; k < K; ++k)
        model.self_nets.push_back(
            Mlp::make({d, cfg.hidden, cfg.hidden, d}, split_seed(cfg.seed, 100 + k)));
    for (int e = 0; e < E; ++e) {
        InteractionNets trio;
        trio.g0 = Mlp::make({2 * d, cfg.hidden, cfg.hidden, cfg.hidden, d},
                            split_seed(cfg.seed, 200 + 3 * e));
        trio.g1 = Mlp::make({d, cfg.hidden, cfg.hidden, cfg.hidden, d},
                            split_seed(cfg.seed, 201 + 3 * e));
        trio.g2 = Mlp::make({d, cfg.hidden, cfg.hidden, cfg.hidden, d},
                            split_seed(cfg.seed, 202 + 3 * e));
        model.inter_nets.push_back(std::move(trio));
    }

    // standardisation from training-split statistics
    model.x_shift = RowVectorXd::Zero(d);
    model.x_scale = RowVectorXd::Ones(d);
    model.y_shift = RowVectorXd::Zero(d);
    model.y_scale = RowVectorXd::Ones(d);
    double target_var = 0.0;
    {
        Eigen::ArrayXd sx = Eigen::ArrayXd::Zero(d), sx2 = Eigen::ArrayXd::Zero(d);
        Eigen::ArrayXd sy = Eigen::ArrayXd::Zero(d), sy2 = Eigen::ArrayXd::Zero(d);
        size_t cnt = 0;
        for (size_t t = 0; t < ts.count(); ++t) {
            if (!ts.is_train[t]) continue;
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < d; ++k) {
                    const double x = ts.states[(t * n + i) * d + k];
                    const double y = ts.targets[(t * n + i) * d + k];
                    sx(k) += x; sx2(k) += x * x;
                    sy(k) += y; sy2(k) += y * y;
                }
            cnt += n;
        }
        Eigen::ArrayXd mx = sx / cnt, my = sy / cnt;
        Eigen::ArrayXd vx = (sx2 / cnt - mx.square()).max(0.0);
        Eigen::ArrayXd vy = (sy2 / cnt - my.square()).max(0.0);
        target_var = vy.mean();
        if (cfg.standardize) {
            for (int k = 0; k < d; ++k) {
                model.x_shift(k) = mx(k);
                model.x_scale(k) = std::max(std::sqrt(vx(k)), 1e-12);
                model.y_shift(k) = my(k);
                model.y_scale(k) = std::max(std::sqrt(vy(k)), 1e-12);
            }
            target_var = target_var > 0 ? 1.0 : 0.0;
        }
    }

    const BatchLayout lay = make_layout(topo, mask, d);
    const size_t T = ts.count();
    std::vector<int> obs_nodes;
    for (int k = 0; k < K; ++k)
        obs_nodes.insert(obs_nodes.end(), lay.nodes_of_type[k].begin(),
                         lay.nodes_of_type[k].end());
    std::sort(obs_nodes.begin(), obs_nodes.end());
    const bool all_observed = int(obs_nodes.size()) == n;
    if (cfg.lambda > 0 && obs_nodes.size() < 2)
        throw ConfigError("train_decoupler: variance term requires >= 2 observed nodes");

    // standardised states/targets, timestamp-major
    std::vector<MatrixXd> self_in(K);
    std::vector<MatrixXd> e_in0(E), e_in1(E), e_in2(E);
    MatrixXd targets_std(T * n, d);
    MatrixXd states_std(T * n, d);
    for (size_t t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) {
                states_std(t * n + i, k) =
                    (ts.states[(t * n + i) * d + k] - model.x_shift(k)) / model.x_scale(k);
                targets_std(t * n + i, k) =
                    (ts.targets[(t * n + i) * d + k] - model.y_shift(k)) / model.y_scale(k);
            }
    for (int k = 0; k < K; ++k) {
        const auto& nodes = lay.nodes_of_type[k];
        self_in[k].resize(T * nodes.size(), d);
        for (size_t t = 0; t < T; ++t)
            for (size_t r = 0; r < nodes.size(); ++r)
                self_in[k].row(t * nodes.size() + r) = states_std.row(t * n + nodes[r]);
    }
    for (int e = 0; e < E; ++e) {
        const auto& edges = lay.edges_of_type[e];
        e_in0[e].resize(T * edges.size(), 2 * d);
        e_in1[e].resize(T * edges.size(), d);
        e_in2[e].resize(T * edges.size(), d);
        for (size_t t = 0; t < T; ++t)
            for (size_t r = 0; r < edges.size(); ++r) {
                const size_t row = t * edges.size() + r;
                e_in0[e].block(row, 0, 1, d) = states_std.row(t * n + edges[r].dst);
                e_in0[e].block(row, d, 1, d) = states_std.row(t * n + edges[r].src);
                e_in1[e].row(row) = states_std.row(t * n + edges[r].dst);
                e_in2[e].row(row) = states_std.row(t * n + edges[r].src);
            }
    }

    std::vector<size_t> train_times, val_times;
    for (size_t t = 0; t < T; ++t)
        (ts.is_train[t] ? train_times : val_times).push_back(t);
    if (val_times.empty()) val_times = train_times;  // degenerate split: validate on train

    // forward + loss (+ optional gradients) over a set of timestamps
    auto evaluate = [&](const std::vector<size_t>& times, bool with_grad,
                        FlatParams& flat, Eigen::VectorXd* grad_out) -> double {
        std::vector<MlpCache> self_cache(K), g0_cache(E), g1_cache(E), g2_cache(E);
        std::vector<MatrixXd> self_out(K), g0_out(E), g1_out(E), g2_out(E);
        // restrict batches to the requested timestamps
        std::vector<MatrixXd> bs_in(K), b0(E), b1(E), b2(E);
        for (int k = 0; k < K; ++k) {
            const size_t w = lay.nodes_of_type[k].size();
            bs_in[k].resize(times.size() * w, d);
            for (size_t q = 0; q < times.size(); ++q)
                bs_in[k].middleRows(q * w, w) = self_in[k].middleRows(times[q] * w, w);
        }
        for (int e = 0; e < E; ++e) {
            const size_t w = lay.edges_of_type[e].size();
            b0[e].resize(times.size() * w, 2 * d);
            b1[e].resize(times.size() * w, d);
            b2[e].resize(times.size() * w, d);
            for (size_t q = 0; q < times.size(); ++q) {
                b0[e].middleRows(q * w, w) = e_in0[e].middleRows(times[q] * w, w);
                b1[e].middleRows(q * w, w) = e_in1[e].middleRows(times[q] * w, w);
                b2[e].middleRows(q * w, w) = e_in2[e].middleRows(times[q] * w, w);
            }
        }
        for (int k = 0; k < K; ++k)
            self_out[k] = with_grad ? model.self_nets[k].forward_cached(bs_in[k], self_cache[k])
                                    : model.self_nets[k].forward(bs_in[k]);
        for (int e = 0; e < E; ++e) {
            auto& nets = model.inter_nets[e];
            g0_out[e] = with_grad ? nets.g0.forward_cached(b0[e], g0_cache[e])
                                  : nets.g0.forward(b0[e]);
            g1_out[e] = with_grad ? nets.g1.forward_cached(b1[e], g1_cache[e])
                                  : nets.g1.forward(b1[e]);
            g2_out[e] = with_grad ? nets.g2.forward_cached(b2[e], g2_cache[e])
                                  : nets.g2.forward(b2[e]);
        }

        double total_loss = 0.0;
        std::vector<MatrixXd> d_self(K), d_g(E);
        if (with_grad) {
            for (int k = 0; k < K; ++k) d_self[k] = MatrixXd::Zero(self_out[k].rows(), d);
            for (int e = 0; e < E; ++e) d_g[e] = MatrixXd::Zero(g0_out[e].rows(), d);
        }
        MatrixXd pred(n, d), tgt(n, d);
        const double inv_T = 1.0 / double(times.size());
        for (size_t q = 0; q < times.size(); ++q) {
            const size_t t = times[q];
            pred.setZero();
            for (int k = 0; k < K; ++k) {
                const auto& nodes = lay.nodes_of_type[k];
                const size_t w = nodes.size();
                for (size_t r = 0; r < w; ++r)
                    pred.row(nodes[r]) = self_out[k].row(q * w + r);
            }
            for (int e = 0; e < E; ++e) {
                const auto& edges = lay.edges_of_type[e];
                const size_t w = edges.size();
                for (size_t r = 0; r < w; ++r) {
                    const size_t row = q * w + r;
                    pred.row(edges[r].dst) +=
                        edges[r].w * (g0_out[e].row(row).array() +
                                      g1_out[e].row(row).array() * g2_out[e].row(row).array())
                                         .matrix();
                }
            }
            tgt = targets_std.middleRows(t * n, n);
            MatrixXd pred_obs, tgt_obs;
            if (all_observed) {
                pred_obs = pred;
                tgt_obs = tgt;
            } else {
                pred_obs.resize(obs_nodes.size(), d);
                tgt_obs.resize(obs_nodes.size(), d);
                for (size_t r = 0; r < obs_nodes.size(); ++r) {
                    pred_obs.row(r) = pred.row(obs_nodes[r]);
                    tgt_obs.row(r) = tgt.row(obs_nodes[r]);
                }
            }
            total_loss += loss_eq5(pred_obs, tgt_obs, cfg.lambda, cfg.variance_centered) * inv_T;
            if (with_grad) {
                MatrixXd dpred_obs =
                    loss_eq5_gradient(pred_obs, tgt_obs, cfg.lambda, cfg.variance_centered) *
                    inv_T;
                MatrixXd dpred;
                if (all_observed) {
                    dpred = std::move(dpred_obs);
                } else {
                    dpred = MatrixXd::Zero(n, d);
                    for (size_t r = 0; r < obs_nodes.size(); ++r)
                        dpred.row(obs_nodes[r]) = dpred_obs.row(r);
                }
                for (int k = 0; k < K; ++k) {
                    const auto& nodes = lay.nodes_of_type[k];
                    const size_t w = nodes.size();
                    for (size_t r = 0; r < w; ++r)
                        d_self[k].row(q * w + r) = dpred.row(nodes[r]);
                }
                for (int e = 0; e < E; ++e) {
                    const auto& edges = lay.edges_of_type[e];
                    const size_t w = edges.size();
                    for (size_t r = 0; r < w; ++r)
                        d_g[e].row(q * w + r) = edges[r].w * dpred.row(edges[r].dst);
                }
            }
        }

        if (with_grad) {
            std::vector<std::vector<LayerGrad>> all_grads;
            for (int k = 0; k < K; ++k) {
                auto grads = model.self_nets[k].zero_grads();
                model.self_nets[k].backward(d_self[k], self_cache[k], grads);
                all_grads.push_back(std::move(grads));
            }
            for (int e = 0; e < E; ++e) {
                auto& nets = model.inter_nets[e];
                auto grads0 = nets.g0.zero_grads();
                nets.g0.backward(d_g[e], g0_cache[e], grads0);
                // product rule for g1 .* g2
                MatrixXd d1 = (d_g[e].array() * g2_out[e].array()).matrix();
                MatrixXd d2 = (d_g[e].array() * g1_out[e].array()).matrix();
                auto grads1 = nets.g1.zero_grads();
                nets.g1.backward(d1, g1_cache[e], grads1);
                auto grads2 = nets.g2.zero_grads();
                nets.g2.backward(d2, g2_cache[e], grads2);
                all_grads.push_back(std::move(grads0));
                all_grads.push_back(std::move(grads1));
                all_grads.push_back(std::move(grads2));
            }
            grad_out->resize(flat.total);
            for (size_t i = 0; i < flat.nets.size(); ++i)
                flat.nets[i]->flatten_grads(all_grads[i], grad_out->data() + flat.offsets[i]);
        }
        return total_loss;
    };

    FlatParams flat(model);
    Eigen::VectorXd params, grad, mask_vec;
    flat.gather(params);
    flat.decay_mask(mask_vec);
    AdamW opt(flat.total, cfg.lr, cfg.weight_decay, mask_vec);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_params = params;
    int best_epoch = 0, stall = 0;
    const double val_stop = cfg.val_threshold_scale * std::max(target_var, 0.0);

    std::vector<std::vector<size_t>> batches;
    if (cfg.batch_timestamps <= 0 || size_t(cfg.batch_timestamps) >= train_times.size()) {
        batches.push_back(train_times);
    } else {
        for (size_t s = 0; s < train_times.size(); s += cfg.batch_timestamps)
            batches.emplace_back(train_times.begin() + s,
                                 train_times.begin() +
                                     std::min(train_times.size(), s + cfg.batch_timestamps));
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // cosine decay to lr/100 keeps the L1 loss from stalling at the step size
        opt.lr = cfg.lr * (0.01 + 0.99 * 0.5 *
                                      (1.0 + std::cos(M_PI * (epoch - 1) /
                                                      std::max(1, cfg.epochs - 1))));
        double train_loss = 0.0;
        for (const auto& batch : batches) {
            const double l = evaluate(batch, true, flat, &grad);
            train_loss += l * double(batch.size()) / double(train_times.size());
            if (!std::isfinite(l))
                throw StageError("train_decoupler: non-finite loss at epoch " +
                                 std::to_string(epoch));
            opt.step(params, grad);
            flat.scatter(params);
        }
        const double val_loss = evaluate(val_times, false, flat, nullptr);
        result.log.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val - 1e-15) {
            best_val = val_loss;
            best_params = params;
            best_epoch = epoch;
            stall = 0;
        } else {
            ++stall;
        }
        if (val_loss < val_stop) {
            result.hit_threshold = true;
            break;
        }
        if (stall >= cfg.patience) break;
    }
    flat.scatter(best_params);
    result.model = std::move(model);
    result.best_val = best_val;
    result.best_epoch = best_epoch;
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint serialisation
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json mlp_to_json(const Mlp& net) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& layer : net.layers) {
        nlohmann::ordered_json jl;
        jl["in"] = layer.W.rows();
        jl["out"] = layer.W.cols();
        jl["W"] = std::vector<double>(layer.W.data(), layer.W.data() + layer.W.size());
        jl["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        jl["activated"] = layer.activated;
        if (layer.activated) {
            jl["act_a"] = layer.act.a;
            jl["act_b"] = layer.act.b;
        }
        layers.push_back(jl);
    }
    return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net;
    for (const auto& jl : j) {
        DenseLayer layer;
        const int in = jl.at("in"), out = jl.at("out");
        std::vector<double> w = jl.at("W"), b = jl.at("bias");
        layer.W = Eigen::Map<const Eigen::MatrixXd>(w.data(), in, out);
        layer.bias = Eigen::Map<const Eigen::RowVectorXd>(b.data(), out);
        layer.activated = jl.at("activated");
        if (layer.activated) {
            std::vector<double> a = jl.at("act_a"), bb = jl.at("act_b");
            std::copy(a.begin(), a.end(), layer.act.a.begin());
            std::copy(bb.begin(), bb.end(), layer.act.b.begin());
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace

std::string DecouplerModel::to_json() const {
    nlohmann::ordered_json j;
    j["d"] = d;
    j["lambda"] = lambda;
    j["variance_centered"] = variance_centered;
    j["x_shift"] = std::vector<double>(x_shift.data(), x_shift.data() + x_shift.size());
    j["x_scale"] = std::vector<double>(x_scale.data(), x_scale.data() + x_scale.size());
    j["y_shift"] = std::vector<double>(y_shift.data(), y_shift.data() + y_shift.size());
    j["y_scale"] = std::vector<double>(y_scale.data(), y_scale.data() + y_scale.size());
    j["self_nets"] = nlohmann::ordered_json::array();
    for (const auto& net : self_nets) j["self_nets"].push_back(mlp_to_json(net));
    j["inter_nets"] = nlohmann::ordered_json::array();
    for (const auto& trio : inter_nets) {
        nlohmann::ordered_json jt;
        jt["g0"] = mlp_to_json(trio.g0);
        jt["g1"] = mlp_to_json(trio.g1);
        jt["g2"] = mlp_to_json(trio.g2);
        j["inter_nets"].push_back(jt);
    }
    return j.dump(2);
}

DecouplerModel DecouplerModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DecouplerModel m;
    m.d = j.at("d");
    m.lambda = j.at("lambda");
    m.variance_centered = j.at("variance_centered");
    auto vec = [&](const char* key) {
        std::vector<double> v = j.at(key);
        return Eigen::Map<const RowVectorXd>(v.data(), v.size()).eval();
    };
    m.x_shift = vec("x_shift");
    m.x_scale = vec("x_scale");
    m.y_shift = vec("y_shift");
    m.y_scale = vec("y_scale");
    for (const auto& jn : j.at("self_nets")) m.self_nets.push_back(mlp_from_json(jn));
    for (const auto& jt : j.at("inter_nets")) {
        InteractionNets trio;
        trio.g0 = mlp_from_json(jt.at("g0"));
        trio.g1 = mlp_from_json(jt.at("g1"));
        trio.g2 = mlp_from_json(jt.at("g2"));
        m.inter_nets.push_back(std::move(trio));
    }
    return m;
}

void DecouplerModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw StageError("decoupler save: cannot write " + path);
    out << to_json() << "\n";
}

DecouplerModel DecouplerModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("decoupler load: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace netdyn
