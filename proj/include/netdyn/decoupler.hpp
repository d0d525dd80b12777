#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "netdyn/mlp.hpp"
#include "netdyn/preprocess.hpp"
#include "netdyn/topology.hpp"

namespace netdyn {

struct DecouplerConfig {
    int hidden = 50;
    double lr = 3e-3;               // AdamW, searched range [1e-3, 1e-2]
    double weight_decay = 1e-3;
    int epochs = 1000;
    int patience = 50;              // evaluations without improvement
    double val_threshold_scale = 1e-4;  // stop when val loss < scale * target variance
    double lambda = 0.1;            // error-variance weight in the loss
    bool variance_centered = true;  // statistical variance vs the printed form
    bool standardize = true;        // z-score inputs/targets internally
    int batch_timestamps = 0;       // 0 = full batch
    uint64_t seed = 0;
};

struct InteractionNets {
    Mlp g0, g1, g2;  // pairwise term g0(x_i,x_j) + g1(x_i) .* g2(x_j)
};

/// One self net per node type and one interaction triple per edge type,
/// plus the internal standardisation applied around them.
struct DecouplerModel {
    int d = 0;
    std::vector<Mlp> self_nets;
    std::vector<InteractionNets> inter_nets;
    Eigen::RowVectorXd x_shift, x_scale, y_shift, y_scale;
    double lambda = 0.1;
    bool variance_centered = true;

    int num_node_types() const { return int(self_nets.size()); }
    int num_edge_types() const { return int(inter_nets.size()); }

    Eigen::MatrixXd predict_derivative(const Topology& topo, const Eigen::MatrixXd& state,
                                       const ObservationMask& mask = {}) const;
    /// Pure forward evaluation, standardisation folded in; rows are grid points.
    Eigen::MatrixXd query_self(int node_type, const Eigen::MatrixXd& grid) const;
    Eigen::MatrixXd query_inter(int edge_type, const Eigen::MatrixXd& pair_grid) const;

    std::string to_json() const;
    static DecouplerModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static DecouplerModel load(const std::string& path);
};

/// Eq-style training loss on one time slice: mean absolute error plus
/// lambda times the variance of per-node L1 errors, normalised by N*d.
double loss_eq5(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double lambda,
                bool variance_centered = true);
Eigen::MatrixXd loss_eq5_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                  double lambda, bool variance_centered = true);

struct EpochLog {
    int epoch;
    double train_loss;
    double val_loss;
};

struct TrainResult {
    DecouplerModel model;
    std::vector<EpochLog> log;
    double best_val = 0.0;
    int best_epoch = 0;
    bool hit_threshold = false;
};

TrainResult train_decoupler(const TrainingSet& ts, const Topology& topo,
                            const DecouplerConfig& cfg, const ObservationMask& mask = {});

}  // namespace netdyn
