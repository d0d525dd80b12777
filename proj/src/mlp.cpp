#include "netdyn/mlp.hpp"

#include <cmath>

#include "netdyn/common.hpp"

namespace netdyn {

Mlp Mlp::make(const std::vector<int>& sizes, uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
    Mlp net;
    Rng rng(seed);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        const int in = sizes[l], out = sizes[l + 1];
        const double bound = 1.0 / std::sqrt(double(in));  // uniform fan-in scaling
        layer.W.resize(in, out);
        layer.bias.resize(out);
        for (int i = 0; i < in; ++i)
            for (int j = 0; j < out; ++j) layer.W(i, j) = uniform_range(rng, -bound, bound);
        for (int j = 0; j < out; ++j) layer.bias(j) = uniform_range(rng, -bound, bound);
        layer.activated = l + 2 < sizes.size();
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

inline void apply_rational(const RationalActivation& act, const Eigen::MatrixXd& Z,
                           Eigen::MatrixXd& out) {
    out.resizeLike(Z);
    const double a0 = act.a[0], a1 = act.a[1], a2 = act.a[2], a3 = act.a[3];
    const double b0 = act.b[0], b1 = act.b[1], b2 = act.b[2];
    const double* z = Z.data();
    double* o = out.data();
    const Eigen::Index m = Z.size();
    for (Eigen::Index i = 0; i < m; ++i) {
        const double x = z[i];
        const double p = a0 + x * (a1 + x * (a2 + x * a3));
        const double q = b0 + x * (b1 + x * b2);
        o[i] = p / (1.0 + std::abs(q));
    }
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd h = X, act;
    for (const auto& layer : layers) {
        Eigen::MatrixXd z = (h * layer.W).rowwise() + layer.bias;
        if (layer.activated) {
            apply_rational(layer.act, z, act);
            h = std::move(act);
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Eigen::MatrixXd Mlp::forward_cached(const Eigen::MatrixXd& X, MlpCache& cache) const {
    cache.inputs.clear();
    cache.preacts.clear();
    Eigen::MatrixXd h = X, act;
    for (const auto& layer : layers) {
        cache.inputs.push_back(h);
        Eigen::MatrixXd z = (h * layer.W).rowwise() + layer.bias;
        cache.preacts.push_back(z);
        if (layer.activated) {
            apply_rational(layer.act, z, act);
            h = std::move(act);
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& dY, const MlpCache& cache,
                              std::vector<LayerGrad>& grads) const {
    Eigen::MatrixXd delta = dY;
    for (int l = int(layers.size()) - 1; l >= 0; --l) {
        const auto& layer = layers[l];
        auto& g = grads[l];
        Eigen::MatrixXd dZ;
        if (layer.activated) {
            const Eigen::MatrixXd& Z = cache.preacts[l];
            dZ.resizeLike(Z);
            const double a0 = layer.act.a[0], a1 = layer.act.a[1], a2 = layer.act.a[2],
                         a3 = layer.act.a[3];
            const double b0 = layer.act.b[0], b1 = layer.act.b[1], b2 = layer.act.b[2];
            double ga0 = 0, ga1 = 0, ga2 = 0, ga3 = 0, gb0 = 0, gb1 = 0, gb2 = 0;
            const double* z = Z.data();
            const double* dy = delta.data();
            double* dz = dZ.data();
            const Eigen::Index m = Z.size();
            for (Eigen::Index i = 0; i < m; ++i) {
                const double x = z[i];
                const double p = a0 + x * (a1 + x * (a2 + x * a3));
                const double dp = a1 + x * (2 * a2 + x * 3 * a3);
                const double q = b0 + x * (b1 + x * b2);
                const double dq = b1 + 2 * b2 * x;
                const double sq = q > 0 ? 1.0 : (q < 0 ? -1.0 : 0.0);
                const double den = 1.0 + std::abs(q);
                const double inv = 1.0 / den;
                const double inv2 = inv * inv;
                const double g_out = dy[i];
                dz[i] = g_out * (dp * inv - p * sq * dq * inv2);
                const double d_dena = g_out * inv;        // dR/da_k = x^k / den
                const double d_denb = -g_out * p * sq * inv2;  // dR/db_k = -p sgn(q) x^k / den^2
                ga0 += d_dena;
                ga1 += d_dena * x;
                ga2 += d_dena * x * x;
                ga3 += d_dena * x * x * x;
                gb0 += d_denb;
                gb1 += d_denb * x;
                gb2 += d_denb * x * x;
            }
            g.a[0] += ga0; g.a[1] += ga1; g.a[2] += ga2; g.a[3] += ga3;
            g.b[0] += gb0; g.b[1] += gb1; g.b[2] += gb2;
        } else {
            dZ = delta;
        }
        g.W.noalias() += cache.inputs[l].transpose() * dZ;
        g.bias += dZ.colwise().sum();
        delta = dZ * layer.W.transpose();  // dL/d(input of layer l)
    }
    return delta;
}

std::vector<LayerGrad> Mlp::zero_grads() const {
    std::vector<LayerGrad> grads;
    for (const auto& layer : layers) {
        LayerGrad g;
        g.W = Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols());
        g.bias = Eigen::RowVectorXd::Zero(layer.bias.size());
        grads.push_back(std::move(g));
    }
    return grads;
}

int Mlp::num_params() const {
    int n = 0;
    for (const auto& layer : layers) {
        n += int(layer.W.size() + layer.bias.size());
        if (layer.activated) n += 7;
    }
    return n;
}

void Mlp::get_params(double* out) const {
    for (const auto& layer : layers) {
        out = std::copy(layer.W.data(), layer.W.data() + layer.W.size(), out);
        out = std::copy(layer.bias.data(), layer.bias.data() + layer.bias.size(), out);
        if (layer.activated) {
            out = std::copy(layer.act.a.begin(), layer.act.a.end(), out);
            out = std::copy(layer.act.b.begin(), layer.act.b.end(), out);
        }
    }
}

void Mlp::set_params(const double* in) {
    for (auto& layer : layers) {
        std::copy(in, in + layer.W.size(), layer.W.data());
        in += layer.W.size();
        std::copy(in, in + layer.bias.size(), layer.bias.data());
        in += layer.bias.size();
        if (layer.activated) {
            std::copy(in, in + 4, layer.act.a.begin());
            in += 4;
            std::copy(in, in + 3, layer.act.b.begin());
            in += 3;
        }
    }
}

void Mlp::flatten_grads(const std::vector<LayerGrad>& grads, double* out) const {
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& g = grads[l];
        out = std::copy(g.W.data(), g.W.data() + g.W.size(), out);
        out = std::copy(g.bias.data(), g.bias.data() + g.bias.size(), out);
        if (layers[l].activated) {
            out = std::copy(g.a.begin(), g.a.end(), out);
            out = std::copy(g.b.begin(), g.b.end(), out);
        }
    }
}

void Mlp::decay_mask(double* out) const {
    for (const auto& layer : layers) {
        out = std::fill_n(out, layer.W.size(), 1.0);
        out = std::fill_n(out, layer.bias.size(), 0.0);
        if (layer.activated) out = std::fill_n(out, 7, 0.0);
    }
}

}  // namespace netdyn
