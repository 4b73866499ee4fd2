#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "geez/ops.hpp"
#include "geez/rng.hpp"
#include "geez/tensor.hpp"

namespace geez::nn {

// Ordered, named collection of parameter tensors; names are slash-delimited
// paths. Entries ending in running_mean/running_var are buffers: serialized
// with the model but never touched by optimizers. clone() shares no storage,
// which is what lets meta-learning adapt a copy while the original trains on.
class ModelParams {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

    // Trainable tensors (non-buffers) in stable entry order.
    std::vector<Tensor> trainable() const;
    std::int64_t parameter_count() const;

    ModelParams clone() const;
    void zero_grad();

    static bool is_buffer(const std::string& name);

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// train: batch statistics, running-stat updates, dropout active.
// adapt: frozen running statistics but dropout active (inner-loop updates).
// eval:  frozen statistics, no dropout.
enum class RunMode { train, adapt, eval };

struct CharCNNConfig {
    int input_h = 28;
    int input_w = 28;
    std::vector<int> conv_channels = {32, 64, 128, 256};
    std::vector<int> fc_units = {512, 256};
    int num_classes = 182;
    double dropout_fc = 0.5;
};

struct WordCRNNConfig {
    int input_h = 32;
    int input_w = 128;
    std::vector<int> block_channels = {64, 128, 256, 512};
    std::vector<std::pair<int, int>> pool_schedule = {{2, 2}, {2, 2}, {2, 1}, {2, 1}};
    int lstm_hidden = 256;  // per direction
    int lstm_layers = 2;
    double dropout = 0.25;
    int num_classes = 0;  // charset size C; per-frame classes are C+1, blank last

    int time_steps() const;      // input_w / product of pool widths
    int feature_height() const;  // input_h / product of pool heights
};

// Layers. Forward passes record onto the active tape; see geez/tensor.hpp.

// Per-channel batch normalization (eps 1e-5). Train mode normalizes by batch
// statistics and folds them into the running buffers with momentum 0.9;
// adapt/eval normalize by the frozen running statistics.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, RunMode mode);

// Inverted dropout: train/adapt zero each element with probability rate and
// scale survivors by 1/(1-rate); eval is the identity.
Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng& rng);

// Standard LSTM cell, gate order [input, forget, cell, output] packed in one
// (d+H)×4H weight matrix acting on [x_t, h_prev].
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const Tensor& w, const Tensor& b);

// Stacked bidirectional LSTM over a time-major sequence of N×d steps; each
// layer concatenates forward and backward states per step and applies
// dropout before feeding the next layer.
std::vector<Tensor> bilstm(const std::vector<Tensor>& seq, const ModelParams& params,
                           const std::string& prefix, int layers, int hidden,
                           double dropout_rate, RunMode mode, Rng& rng);

// ReLU(BN(conv2(ReLU(BN(conv1 x)))) + proj(x)), then maxpool and dropout.
// proj is a 1×1 convolution when the channel count changes, identity
// otherwise.
Tensor residual_block(const Tensor& x, ModelParams& params, const std::string& prefix,
                      int pool_h, int pool_w, double dropout_rate, RunMode mode, Rng& rng);

ModelParams char_cnn_init(const CharCNNConfig& cfg, Rng& rng);
// images {N,1,28,28} in [0,1] -> {N, num_classes} log-probabilities.
Tensor char_cnn_forward(const Tensor& images, ModelParams& params, const CharCNNConfig& cfg,
                        RunMode mode, Rng& rng);

ModelParams word_crnn_init(const WordCRNNConfig& cfg, Rng& rng);
// images {N,1,32,128} in [0,1] -> {T, N, C+1} per-frame log-probabilities.
Tensor word_crnn_forward(const Tensor& images, ModelParams& params, const WordCRNNConfig& cfg,
                         RunMode mode, Rng& rng);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over the trainable entries of one ModelParams.
class Adam {
public:
    Adam(AdamConfig cfg, const ModelParams& params);
    void step(ModelParams& params);
    int steps() const { return step_; }

private:
    AdamConfig cfg_;
    int step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

class Sgd {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    void step(ModelParams& params);

private:
    double lr_;
};

// Versioned binary checkpoint (magic "GZOC"), bit-exact round trip. Running
// BN statistics ride along as <layer>/running_mean, <layer>/running_var.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
// Strict schema check: loaded and expected must carry exactly the same names
// with the same shapes.
void validate_checkpoint(const ModelParams& loaded, const ModelParams& expected);

}  // namespace geez::nn
