#include <cmath>
#include <stdexcept>
#include <string>

#include "geez/nn.hpp"

namespace geez::nn {

namespace {

Tensor he_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
    return t;
}

void add_conv(ModelParams& p, const std::string& name, int out_ch, int in_ch, Rng& rng) {
    p.add(name + "/w", he_uniform({out_ch, in_ch, 3, 3}, in_ch * 9, rng));
    p.add(name + "/b", Tensor::zeros({out_ch}, true));
}

void add_bn(ModelParams& p, const std::string& name, int channels) {
    p.add(name + "/gamma", Tensor::full({channels}, 1.0, true));
    p.add(name + "/beta", Tensor::zeros({channels}, true));
    p.add(name + "/running_mean", Tensor::zeros({channels}));
    p.add(name + "/running_var", Tensor::full({channels}, 1.0));
}

void add_dense(ModelParams& p, const std::string& name, int d_in, int d_out, Rng& rng) {
    p.add(name + "/w", he_uniform({d_in, d_out}, d_in, rng));
    p.add(name + "/b", Tensor::zeros({d_out}, true));
}

// LSTM weights uniform ±1/sqrt(H); forget-gate bias 1, others 0.
void add_lstm(ModelParams& p, const std::string& name, int d_in, int hidden, Rng& rng) {
    Tensor w = Tensor::zeros({d_in + hidden, 4 * hidden}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : w.mutable_values()) v = rng.uniform(-bound, bound);
    p.add(name + "/w", std::move(w));
    Tensor b = Tensor::zeros({4 * hidden}, true);
    for (int i = hidden; i < 2 * hidden; ++i) b.mutable_values()[static_cast<std::size_t>(i)] = 1.0;
    p.add(name + "/b", std::move(b));
}

void check_image_input(const Tensor& images, int h, int w, const char* model) {
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != h || images.dim(3) != w) {
        throw std::invalid_argument(std::string(model) + ": expected input {N,1," +
                                    std::to_string(h) + "," + std::to_string(w) + "}, got " +
                                    shape_str(images.shape()));
    }
    for (double v : images.values()) {
        if (v < -1e-9 || v > 1.0 + 1e-9) {
            throw std::invalid_argument(std::string(model) + ": pixel values must lie in [0,1]");
        }
    }
}

}  // namespace

ModelParams char_cnn_init(const CharCNNConfig& cfg, Rng& rng) {
    if (cfg.num_classes < 2) throw std::invalid_argument("char_cnn: num_classes must be >= 2");
    for (std::size_t i = 1; i < cfg.conv_channels.size(); ++i) {
        if (cfg.conv_channels[i] <= cfg.conv_channels[i - 1]) {
            throw std::invalid_argument("char_cnn: conv_channels must be strictly increasing");
        }
    }
    if (cfg.fc_units.size() != 2) throw std::invalid_argument("char_cnn: expected two FC widths");

    ModelParams p;
    int in_ch = 1, h = cfg.input_h, w = cfg.input_w;
    for (std::size_t k = 0; k < cfg.conv_channels.size(); ++k) {
        add_conv(p, "conv" + std::to_string(k + 1), cfg.conv_channels[k], in_ch, rng);
        in_ch = cfg.conv_channels[k];
        h /= 2;
        w /= 2;
    }
    const int flat = in_ch * h * w;
    add_dense(p, "fc1", flat, cfg.fc_units[0], rng);
    add_dense(p, "fc2", cfg.fc_units[0], cfg.fc_units[1], rng);
    add_dense(p, "fc3", cfg.fc_units[1], cfg.num_classes, rng);
    return p;
}

Tensor char_cnn_forward(const Tensor& images, ModelParams& params, const CharCNNConfig& cfg,
                        RunMode mode, Rng& rng) {
    check_image_input(images, cfg.input_h, cfg.input_w, "char_cnn");
    const int N = images.dim(0);
    Tensor x = images;
    int h = cfg.input_h, w = cfg.input_w, channels = 1;
    for (std::size_t k = 0; k < cfg.conv_channels.size(); ++k) {
        const std::string name = "conv" + std::to_string(k + 1);
        x = relu(conv2d(x, params.at(name + "/w"), params.at(name + "/b")));
        x = maxpool2d(x, 2, 2);
        h /= 2;
        w /= 2;
        channels = cfg.conv_channels[k];
    }
    x = reshape(x, {N, channels * h * w});
    x = dropout(relu(dense(x, params.at("fc1/w"), params.at("fc1/b"))), cfg.dropout_fc, mode, rng);
    x = dropout(relu(dense(x, params.at("fc2/w"), params.at("fc2/b"))), cfg.dropout_fc, mode, rng);
    return log_softmax(dense(x, params.at("fc3/w"), params.at("fc3/b")));
}

ModelParams word_crnn_init(const WordCRNNConfig& cfg, Rng& rng) {
    if (cfg.num_classes < 1) throw std::invalid_argument("word_crnn: num_classes must be >= 1");
    if (cfg.block_channels.size() != cfg.pool_schedule.size()) {
        throw std::invalid_argument("word_crnn: one pool stage per block required");
    }

    ModelParams p;
    int in_ch = 1;
    for (std::size_t k = 0; k < cfg.block_channels.size(); ++k) {
        const std::string base = "block" + std::to_string(k + 1);
        const int out_ch = cfg.block_channels[k];
        add_conv(p, base + "/conv1", out_ch, in_ch, rng);
        add_bn(p, base + "/bn1", out_ch);
        add_conv(p, base + "/conv2", out_ch, out_ch, rng);
        add_bn(p, base + "/bn2", out_ch);
        if (in_ch != out_ch) {
            p.add(base + "/proj/w", he_uniform({out_ch, in_ch}, in_ch, rng));
        }
        in_ch = out_ch;
    }
    const int d0 = cfg.block_channels.back() * cfg.feature_height();
    for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
        const int d_in = layer == 0 ? d0 : 2 * cfg.lstm_hidden;
        add_lstm(p, "lstm/l" + std::to_string(layer) + "_fwd", d_in, cfg.lstm_hidden, rng);
        add_lstm(p, "lstm/l" + std::to_string(layer) + "_bwd", d_in, cfg.lstm_hidden, rng);
    }
    add_dense(p, "head", 2 * cfg.lstm_hidden, cfg.num_classes + 1, rng);
    return p;
}

Tensor word_crnn_forward(const Tensor& images, ModelParams& params, const WordCRNNConfig& cfg,
                         RunMode mode, Rng& rng) {
    check_image_input(images, cfg.input_h, cfg.input_w, "word_crnn");
    const int N = images.dim(0);

    Tensor x = images;
    for (std::size_t k = 0; k < cfg.block_channels.size(); ++k) {
        const auto [ph, pw] = cfg.pool_schedule[k];
        x = residual_block(x, params, "block" + std::to_string(k + 1), ph, pw, cfg.dropout, mode,
                           rng);
    }

    const int T = cfg.time_steps();
    std::vector<Tensor> seq(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) seq[static_cast<std::size_t>(t)] = time_slice(x, t);
    seq = bilstm(seq, params, "lstm", cfg.lstm_layers, cfg.lstm_hidden, cfg.dropout, mode, rng);

    Tensor frames = concat_rows(seq);  // {T*N, 2H}, row index t*N + n
    Tensor logits = log_softmax(dense(frames, params.at("head/w"), params.at("head/b")));
    return reshape(logits, {T, N, cfg.num_classes + 1});
}

}  // namespace geez::nn
