#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geez/ctc.hpp"
#include "geez/data.hpp"
#include "geez/metrics.hpp"
#include "geez/nn.hpp"

namespace geez::train {

// {N,1,h,w} batch tensor; samples are bilinearly resized when their size
// differs from the target.
Tensor stack_images(const std::vector<const data::Sample*>& batch, int h, int w);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double metric = 0.0;  // train accuracy (char) or train CER (word)
    double seconds = 0.0;
};

struct CharTrainOptions {
    int epochs = 20;
    int batch_size = 32;
    double lr = 0.001;
    bool augment = true;
    std::uint64_t seed = 42;
    bool verbose = false;
};

struct CharTrainResult {
    nn::ModelParams params;
    std::vector<EpochLog> log;
};

CharTrainResult train_char(const std::vector<data::Sample>& train_set,
                           const data::LabelCodec& codec, const nn::CharCNNConfig& cfg,
                           const CharTrainOptions& opts);

double char_accuracy(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                     const std::vector<data::Sample>& samples, const data::LabelCodec& codec);

// CER/NED/word-accuracy over single-character predictions plus the full
// confusion matrix.
metrics::MetricsReport evaluate_char(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                                     const std::vector<data::Sample>& samples,
                                     const data::LabelCodec& codec);

std::vector<std::string> predict_char(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                                      const std::vector<data::Sample>& samples,
                                      const data::LabelCodec& codec);

struct WordTrainOptions {
    int epochs = 50;
    int batch_size = 16;
    double lr = 0.001;
    bool augment = false;
    std::uint64_t seed = 42;
    double stop_at_cer = -1.0;  // stop once training CER reaches this; negative disables
    int eval_every = 5;         // epochs between training-CER measurements
    bool verbose = false;
};

struct WordTrainResult {
    nn::ModelParams params;
    std::vector<EpochLog> log;
    double final_cer = 1.0;  // training CER at the last measurement
};

WordTrainResult train_word(const std::vector<data::Sample>& train_set,
                           const data::LabelCodec& codec, const nn::WordCRNNConfig& cfg,
                           const WordTrainOptions& opts);

enum class Decoder { greedy, beam };

metrics::MetricsReport evaluate_word(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                                     const std::vector<data::Sample>& samples,
                                     const data::LabelCodec& codec,
                                     Decoder decoder = Decoder::greedy, int beam_width = 8);

std::vector<std::string> predict_word(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                                      const std::vector<data::Sample>& samples,
                                      const data::LabelCodec& codec,
                                      Decoder decoder = Decoder::greedy, int beam_width = 8);

// Aggregate corpus CER of the model on a sample set (greedy decoding).
double word_cer(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                const std::vector<data::Sample>& samples, const data::LabelCodec& codec);

// Differentiable CTC task loss over the word model, as consumed by the
// meta-training loop. use_graph_ctc selects the recorded-op CTC path needed
// for exact second-order meta-gradients.
std::function<Tensor(nn::ModelParams&, const std::vector<data::Sample>&, nn::RunMode, Rng&)>
make_word_loss_fn(nn::WordCRNNConfig cfg, const data::LabelCodec& codec, bool use_graph_ctc);

}  // namespace geez::train
