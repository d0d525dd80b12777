#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace netdyn {

/// Trainable rational nonlinearity R(x) = P(x) / (1 + |Q(x)|) with cubic
/// numerator and quadratic Q; the published initial coefficients approximate
/// a smooth ReLU. The denominator is >= 1 for any coefficients, so R is
/// finite for all finite inputs.
struct RationalActivation {
    std::array<double, 4> a{1.1915, 1.5957, 0.5000, 0.0218};
    std::array<double, 3> b{2.3830, 0.0000, 1.0000};

    double forward(double x) const {
        const double p = a[0] + x * (a[1] + x * (a[2] + x * a[3]));
        const double q = b[0] + x * (b[1] + x * b[2]);
        return p / (1.0 + std::abs(q));
    }
};

struct DenseLayer {
    Eigen::MatrixXd W;       // in x out
    Eigen::RowVectorXd bias; // out
    bool activated = true;   // readout layers are linear
    RationalActivation act;
};

struct LayerGrad {
    Eigen::MatrixXd W;
    Eigen::RowVectorXd bias;
    std::array<double, 4> a{};
    std::array<double, 3> b{};
};

struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs;   // per layer, batch x in
    std::vector<Eigen::MatrixXd> preacts;  // per layer, batch x out
};

/// Plain feed-forward net, rational activation after every layer except the
/// readout. Parameters are exposed as one flat vector (weights, bias, then
/// activation coefficients per layer) for the optimiser and gradient checks.
struct Mlp {
    std::vector<DenseLayer> layers;

    static Mlp make(const std::vector<int>& sizes, uint64_t seed);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
    Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& X, MlpCache& cache) const;
    /// Backpropagate dL/dY; accumulates parameter grads, returns dL/dX.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& dY, const MlpCache& cache,
                             std::vector<LayerGrad>& grads) const;

    std::vector<LayerGrad> zero_grads() const;

    int num_params() const;
    void get_params(double* out) const;
    void set_params(const double* in);
    void flatten_grads(const std::vector<LayerGrad>& grads, double* out) const;
    /// 1 where weight decay applies (W entries), 0 for bias and activation coeffs.
    void decay_mask(double* out) const;

    int in_dim() const { return int(layers.front().W.rows()); }
    int out_dim() const { return int(layers.back().W.cols()); }
};

}  // namespace netdyn
