#include <cmath>
#include <stdexcept>

#include "geez/nn.hpp"

namespace geez::nn {

Tensor& ModelParams::add(const std::string& name, Tensor t) {
    if (has(name)) throw std::invalid_argument("ModelParams: duplicate name " + name);
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
}

Tensor& ModelParams::at(const std::string& name) {
    for (auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("ModelParams: no parameter named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("ModelParams: no parameter named " + name);
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return true;
    }
    return false;
}

std::vector<Tensor> ModelParams::trainable() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : entries_) {
        if (!is_buffer(n)) out.push_back(t);
    }
    return out;
}

std::int64_t ModelParams::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) {
        if (!is_buffer(name)) n += t.size();
    }
    return n;
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    for (const auto& [n, t] : entries_) out.entries_.emplace_back(n, t.clone());
    return out;
}

void ModelParams::zero_grad() {
    for (auto& [n, t] : entries_) t.zero_grad();
}

bool ModelParams::is_buffer(const std::string& name) {
    auto ends_with = [&name](const char* suffix) {
        const std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with("running_mean") || ends_with("running_var");
}

int WordCRNNConfig::time_steps() const {
    int w = input_w;
    for (const auto& [ph, pw] : pool_schedule) w /= pw;
    return w;
}

int WordCRNNConfig::feature_height() const {
    int h = input_h;
    for (const auto& [ph, pw] : pool_schedule) h /= ph;
    return h;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, RunMode mode) {
    if (x.rank() != 4) throw std::invalid_argument("batchnorm: expected NCHW input");
    const int C = x.dim(1);
    if (gamma.dim(0) != C || beta.dim(0) != C) {
        throw std::invalid_argument("batchnorm: gamma/beta must have one entry per channel");
    }
    constexpr double kEps = 1e-5;
    constexpr double kMomentum = 0.9;
    const Shape xs = x.shape();

    if (mode == RunMode::train) {
        if (x.dim(0) < 2) {
            throw std::invalid_argument("batchnorm: train mode needs batch size >= 2");
        }
        const double m = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
        Tensor mu = scale(channel_sum(x), 1.0 / m);
        Tensor centered = sub(x, broadcast_channel(mu, xs));
        Tensor var = scale(channel_sum(mul(centered, centered)), 1.0 / m);
        Tensor inv = div(Tensor::full({C}, 1.0), sqrt(add_scalar(var, kEps)));
        Tensor xhat = mul(centered, broadcast_channel(inv, xs));

        auto& rm = running_mean.mutable_values();
        auto& rv = running_var.mutable_values();
        for (int c = 0; c < C; ++c) {
            rm[static_cast<std::size_t>(c)] = kMomentum * rm[static_cast<std::size_t>(c)] +
                                              (1.0 - kMomentum) * mu.values()[static_cast<std::size_t>(c)];
            rv[static_cast<std::size_t>(c)] = kMomentum * rv[static_cast<std::size_t>(c)] +
                                              (1.0 - kMomentum) * var.values()[static_cast<std::size_t>(c)];
        }
        return add(mul(xhat, broadcast_channel(gamma, xs)), broadcast_channel(beta, xs));
    }

    // adapt/eval: frozen statistics; gradients flow to x, gamma, beta only.
    Tensor inv = Tensor::zeros({C});
    for (int c = 0; c < C; ++c) {
        inv.mutable_values()[static_cast<std::size_t>(c)] =
            1.0 / std::sqrt(running_var.values()[static_cast<std::size_t>(c)] + kEps);
    }
    Tensor centered = sub(x, broadcast_channel(running_mean, xs));
    Tensor xhat = mul(centered, broadcast_channel(inv, xs));
    return add(mul(xhat, broadcast_channel(gamma, xs)), broadcast_channel(beta, xs));
}

Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (mode == RunMode::eval || rate == 0.0) return x;
    Tensor mask = Tensor::zeros(x.shape());
    auto& mv = mask.mutable_values();
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mv) v = rng.uniform() < rate ? 0.0 : keep_scale;
    return mul(x, mask);
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const Tensor& w, const Tensor& b) {
    const int H = h_prev.dim(1);
    if (w.dim(0) != x_t.dim(1) + H || w.dim(1) != 4 * H) {
        throw std::invalid_argument("lstm_cell: weight shape does not match input+hidden width");
    }
    Tensor pre = dense(concat_cols(x_t, h_prev), w, b);
    Tensor gate_i = sigmoid(slice_cols(pre, 0, H));
    Tensor gate_f = sigmoid(slice_cols(pre, H, H));
    Tensor gate_g = tanh(slice_cols(pre, 2 * H, H));
    Tensor gate_o = sigmoid(slice_cols(pre, 3 * H, H));
    Tensor c_t = add(mul(gate_f, c_prev), mul(gate_i, gate_g));
    Tensor h_t = mul(gate_o, tanh(c_t));
    return {h_t, c_t};
}

std::vector<Tensor> bilstm(const std::vector<Tensor>& seq, const ModelParams& params,
                           const std::string& prefix, int layers, int hidden,
                           double dropout_rate, RunMode mode, Rng& rng) {
    if (seq.empty()) throw std::invalid_argument("bilstm: empty sequence");
    const int T = static_cast<int>(seq.size());
    const int N = seq[0].dim(0);

    std::vector<Tensor> cur = seq;
    for (int layer = 0; layer < layers; ++layer) {
        const std::string base = prefix + "/l" + std::to_string(layer);
        const Tensor& wf = params.at(base + "_fwd/w");
        const Tensor& bf = params.at(base + "_fwd/b");
        const Tensor& wb = params.at(base + "_bwd/w");
        const Tensor& bb = params.at(base + "_bwd/b");

        std::vector<Tensor> fwd(static_cast<std::size_t>(T));
        Tensor h = Tensor::zeros({N, hidden});
        Tensor c = Tensor::zeros({N, hidden});
        for (int t = 0; t < T; ++t) {
            auto [h2, c2] = lstm_cell(cur[static_cast<std::size_t>(t)], h, c, wf, bf);
            h = h2;
            c = c2;
            fwd[static_cast<std::size_t>(t)] = h;
        }
        std::vector<Tensor> bwd(static_cast<std::size_t>(T));
        h = Tensor::zeros({N, hidden});
        c = Tensor::zeros({N, hidden});
        for (int t = T - 1; t >= 0; --t) {
            auto [h2, c2] = lstm_cell(cur[static_cast<std::size_t>(t)], h, c, wb, bb);
            h = h2;
            c = c2;
            bwd[static_cast<std::size_t>(t)] = h;
        }
        for (int t = 0; t < T; ++t) {
            Tensor joined = concat_cols(fwd[static_cast<std::size_t>(t)],
                                        bwd[static_cast<std::size_t>(t)]);
            cur[static_cast<std::size_t>(t)] = dropout(joined, dropout_rate, mode, rng);
        }
    }
    return cur;
}

Tensor residual_block(const Tensor& x, ModelParams& params, const std::string& prefix,
                      int pool_h, int pool_w, double dropout_rate, RunMode mode, Rng& rng) {
    Tensor y = conv2d(x, params.at(prefix + "/conv1/w"), params.at(prefix + "/conv1/b"));
    y = batchnorm(y, params.at(prefix + "/bn1/gamma"), params.at(prefix + "/bn1/beta"),
                  params.at(prefix + "/bn1/running_mean"), params.at(prefix + "/bn1/running_var"),
                  mode);
    y = relu(y);
    y = conv2d(y, params.at(prefix + "/conv2/w"), params.at(prefix + "/conv2/b"));
    y = batchnorm(y, params.at(prefix + "/bn2/gamma"), params.at(prefix + "/bn2/beta"),
                  params.at(prefix + "/bn2/running_mean"), params.at(prefix + "/bn2/running_var"),
                  mode);
    Tensor skip = params.has(prefix + "/proj/w")
                      ? conv2d_1x1(x, params.at(prefix + "/proj/w"))
                      : x;
    Tensor out = maxpool2d(relu(add(y, skip)), pool_h, pool_w);
    return dropout(out, dropout_rate, mode, rng);
}

}  // namespace geez::nn
