#include "geez/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "geez/utf8.hpp"

namespace geez::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int char_class(const data::Sample& s, const data::LabelCodec& codec) {
    const auto idx = codec.encode(s.label);
    if (idx.size() != 1) {
        throw std::invalid_argument("character sample has label '" + s.label +
                                    "' with length " + std::to_string(idx.size()));
    }
    return idx[0];
}

std::vector<const data::Sample*> pointers(const std::vector<data::Sample>& samples) {
    std::vector<const data::Sample*> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(&s);
    return out;
}

// Batched eval-mode class predictions.
std::vector<int> char_predictions(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                                  const std::vector<data::Sample>& samples) {
    std::vector<int> pred;
    pred.reserve(samples.size());
    Rng rng(0);  // unused in eval mode
    const auto ptrs = pointers(samples);
    for (std::size_t at = 0; at < ptrs.size(); at += 64) {
        const std::size_t end = std::min(ptrs.size(), at + 64);
        std::vector<const data::Sample*> batch(ptrs.begin() + static_cast<std::ptrdiff_t>(at),
                                               ptrs.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor logp = char_cnn_forward(stack_images(batch, cfg.input_h, cfg.input_w), params, cfg,
                                       nn::RunMode::eval, rng);
        const int C = logp.dim(1);
        for (int n = 0; n < static_cast<int>(batch.size()); ++n) {
            int best = 0;
            for (int c = 1; c < C; ++c) {
                if (logp.at({n, c}) > logp.at({n, best})) best = c;
            }
            pred.push_back(best);
        }
    }
    return pred;
}

std::vector<std::vector<int>> word_predictions(nn::ModelParams& params,
                                               const nn::WordCRNNConfig& cfg,
                                               const std::vector<data::Sample>& samples,
                                               Decoder decoder, int beam_width) {
    std::vector<std::vector<int>> out;
    out.reserve(samples.size());
    Rng rng(0);
    const auto ptrs = pointers(samples);
    for (std::size_t at = 0; at < ptrs.size(); at += 32) {
        const std::size_t end = std::min(ptrs.size(), at + 32);
        std::vector<const data::Sample*> batch(ptrs.begin() + static_cast<std::ptrdiff_t>(at),
                                               ptrs.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor logp = word_crnn_forward(stack_images(batch, cfg.input_h, cfg.input_w), params, cfg,
                                        nn::RunMode::eval, rng);
        auto decoded = decoder == Decoder::greedy ? ctc::greedy_decode(logp)
                                                  : ctc::beam_decode(logp, beam_width);
        for (auto& d : decoded) out.push_back(std::move(d));
    }
    return out;
}

}  // namespace

Tensor stack_images(const std::vector<const data::Sample*>& batch, int h, int w) {
    if (batch.empty()) throw std::invalid_argument("stack_images: empty batch");
    const int N = static_cast<int>(batch.size());
    Tensor out = Tensor::zeros({N, 1, h, w});
    auto& ov = out.mutable_values();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int n = 0; n < N; ++n) {
        const data::Sample* s = batch[static_cast<std::size_t>(n)];
        if (s->height == h && s->width == w) {
            std::copy(s->pixels.begin(), s->pixels.end(),
                      ov.begin() + static_cast<std::ptrdiff_t>(n * plane));
        } else {
            const auto resized = data::resize_bilinear(s->pixels, s->height, s->width, h, w);
            std::copy(resized.begin(), resized.end(),
                      ov.begin() + static_cast<std::ptrdiff_t>(n * plane));
        }
    }
    return out;
}

CharTrainResult train_char(const std::vector<data::Sample>& train_set,
                           const data::LabelCodec& codec, const nn::CharCNNConfig& cfg,
                           const CharTrainOptions& opts) {
    if (train_set.empty()) throw std::invalid_argument("train_char: empty training set");
    std::vector<int> classes;
    classes.reserve(train_set.size());
    for (const auto& s : train_set) classes.push_back(char_class(s, codec));

    Rng init_rng = Rng::derive(opts.seed, 0x1217ULL);
    CharTrainResult res{nn::char_cnn_init(cfg, init_rng), {}};
    nn::Adam opt({.lr = opts.lr}, res.params);
    Rng shuffle_rng = Rng::derive(opts.seed, 1);
    Rng aug_rng = Rng::derive(opts.seed, 2);
    Rng drop_rng = Rng::derive(opts.seed, 3);
    const data::AugmentParams aug_params;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto t0 = Clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        std::int64_t hits = 0;

        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(opts.batch_size));
            std::vector<data::Sample> augmented;
            std::vector<const data::Sample*> batch;
            std::vector<int> labels;
            batch.reserve(end - at);
            for (std::size_t k = at; k < end; ++k) {
                const data::Sample& s = train_set[order[k]];
                if (opts.augment) {
                    augmented.push_back(data::augment(s, aug_params, aug_rng));
                } else {
                    batch.push_back(&s);
                }
                labels.push_back(classes[order[k]]);
            }
            if (opts.augment) {
                batch = pointers(augmented);
            }

            res.params.zero_grad();
            Tape tape;
            Tensor loss;
            Tensor logp;
            {
                TapeScope scope(tape);
                logp = char_cnn_forward(stack_images(batch, cfg.input_h, cfg.input_w), res.params,
                                        cfg, nn::RunMode::train, drop_rng);
                loss = nll_loss(logp, labels);
            }
            tape.backward(loss);
            opt.step(res.params);
            loss_sum += loss.item();
            ++batches;
            for (int n = 0; n < static_cast<int>(batch.size()); ++n) {
                int best = 0;
                for (int c = 1; c < cfg.num_classes; ++c) {
                    if (logp.at({n, c}) > logp.at({n, best})) best = c;
                }
                if (best == labels[static_cast<std::size_t>(n)]) ++hits;
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss = loss_sum / std::max(1, batches);
        log.metric = static_cast<double>(hits) / static_cast<double>(train_set.size());
        log.seconds = seconds_since(t0);
        if (!std::isfinite(log.loss)) {
            throw std::runtime_error("train_char: non-finite loss at epoch " +
                                     std::to_string(epoch));
        }
        if (opts.verbose) {
            std::fprintf(stderr, "epoch %3d  loss %.4f  train-acc %.4f  (%.1fs)\n", epoch,
                         log.loss, log.metric, log.seconds);
        }
        res.log.push_back(log);
    }
    return res;
}

double char_accuracy(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                     const std::vector<data::Sample>& samples, const data::LabelCodec& codec) {
    if (samples.empty()) throw std::invalid_argument("char_accuracy: empty sample set");
    const auto pred = char_predictions(params, cfg, samples);
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (pred[i] == char_class(samples[i], codec)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

metrics::MetricsReport evaluate_char(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                                     const std::vector<data::Sample>& samples,
                                     const data::LabelCodec& codec) {
    if (samples.empty()) throw std::invalid_argument("evaluate_char: empty sample set");
    const auto pred = char_predictions(params, cfg, samples);

    metrics::MetricsReport rep;
    std::vector<std::pair<std::string, std::string>> word_pairs;
    std::vector<std::pair<int, int>> class_pairs;
    std::int64_t edits = 0, ref_len = 0;
    double ned_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int truth = char_class(samples[i], codec);
        const std::string predicted = codec.decode({pred[i]});
        word_pairs.emplace_back(samples[i].label, predicted);
        class_pairs.emplace_back(truth, pred[i]);
        const auto lev = metrics::levenshtein(utf8_decode(samples[i].label),
                                              utf8_decode(predicted));
        edits += lev.distance;
        ref_len += lev.breakdown.ref_length;
        ned_sum += metrics::ned(samples[i].label, predicted);
    }
    rep.cer = static_cast<double>(edits) / static_cast<double>(ref_len);
    rep.ned = ned_sum / static_cast<double>(samples.size());
    rep.word_accuracy = metrics::word_accuracy(word_pairs);
    rep.confusion = metrics::confusion_matrix(class_pairs, codec.size());
    return rep;
}

std::vector<std::string> predict_char(nn::ModelParams& params, const nn::CharCNNConfig& cfg,
                                      const std::vector<data::Sample>& samples,
                                      const data::LabelCodec& codec) {
    std::vector<std::string> out;
    for (int p : char_predictions(params, cfg, samples)) out.push_back(codec.decode({p}));
    return out;
}

WordTrainResult train_word(const std::vector<data::Sample>& train_set,
                           const data::LabelCodec& codec, const nn::WordCRNNConfig& cfg,
                           const WordTrainOptions& opts) {
    if (train_set.empty()) throw std::invalid_argument("train_word: empty training set");
    std::vector<std::vector<int>> encoded;
    encoded.reserve(train_set.size());
    for (const auto& s : train_set) encoded.push_back(codec.encode(s.label));

    Rng init_rng = Rng::derive(opts.seed, 0x1217ULL);
    WordTrainResult res{nn::word_crnn_init(cfg, init_rng), {}, 1.0};
    nn::Adam opt({.lr = opts.lr}, res.params);
    Rng shuffle_rng = Rng::derive(opts.seed, 1);
    Rng aug_rng = Rng::derive(opts.seed, 2);
    Rng drop_rng = Rng::derive(opts.seed, 3);
    const data::AugmentParams aug_params;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto t0 = Clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;

        std::size_t at = 0;
        while (at < order.size()) {
            std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(opts.batch_size));
            // batch normalization needs at least two items per train batch
            if (order.size() - end == 1) end = order.size();
            if (end - at == 1) break;

            std::vector<data::Sample> augmented;
            std::vector<const data::Sample*> batch;
            std::vector<std::vector<int>> labels;
            for (std::size_t k = at; k < end; ++k) {
                const data::Sample& s = train_set[order[k]];
                if (opts.augment) {
                    augmented.push_back(data::augment(s, aug_params, aug_rng));
                } else {
                    batch.push_back(&s);
                }
                labels.push_back(encoded[order[k]]);
            }
            if (opts.augment) batch = pointers(augmented);

            res.params.zero_grad();
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                Tensor logp = word_crnn_forward(stack_images(batch, cfg.input_h, cfg.input_w),
                                                res.params, cfg, nn::RunMode::train, drop_rng);
                loss = ctc::ctc_loss(logp, labels).loss;
            }
            tape.backward(loss);
            opt.step(res.params);
            loss_sum += loss.item();
            ++batches;
            at = end;
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss = loss_sum / std::max(1, batches);
        log.seconds = seconds_since(t0);
        if (!std::isfinite(log.loss)) {
            throw std::runtime_error("train_word: non-finite loss at epoch " +
                                     std::to_string(epoch));
        }

        const bool measure = epoch % std::max(1, opts.eval_every) == 0 || epoch == opts.epochs;
        if (measure) {
            res.final_cer = word_cer(res.params, cfg, train_set, codec);
            log.metric = res.final_cer;
        } else {
            log.metric = res.final_cer;
        }
        if (opts.verbose) {
            std::fprintf(stderr, "epoch %3d  ctc-loss %.4f  train-cer %.4f  (%.1fs)\n", epoch,
                         log.loss, log.metric, log.seconds);
        }
        res.log.push_back(log);
        if (measure && opts.stop_at_cer >= 0.0 && res.final_cer <= opts.stop_at_cer) break;
    }
    return res;
}

metrics::MetricsReport evaluate_word(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                                     const std::vector<data::Sample>& samples,
                                     const data::LabelCodec& codec, Decoder decoder,
                                     int beam_width) {
    if (samples.empty()) throw std::invalid_argument("evaluate_word: empty sample set");
    const auto decoded = word_predictions(params, cfg, samples, decoder, beam_width);

    metrics::MetricsReport rep;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::int64_t edits = 0, ref_len = 0;
    double ned_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string predicted = codec.decode(decoded[i]);
        pairs.emplace_back(samples[i].label, predicted);
        const auto lev =
            metrics::levenshtein(utf8_decode(samples[i].label), utf8_decode(predicted));
        edits += lev.distance;
        ref_len += lev.breakdown.ref_length;
        ned_sum += metrics::ned(samples[i].label, predicted);
    }
    if (ref_len == 0) throw std::invalid_argument("evaluate_word: empty ground-truth labels");
    rep.cer = static_cast<double>(edits) / static_cast<double>(ref_len);
    rep.ned = ned_sum / static_cast<double>(samples.size());
    rep.word_accuracy = metrics::word_accuracy(pairs);
    return rep;
}

std::vector<std::string> predict_word(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                                      const std::vector<data::Sample>& samples,
                                      const data::LabelCodec& codec, Decoder decoder,
                                      int beam_width) {
    std::vector<std::string> out;
    for (const auto& d : word_predictions(params, cfg, samples, decoder, beam_width)) {
        out.push_back(codec.decode(d));
    }
    return out;
}

double word_cer(nn::ModelParams& params, const nn::WordCRNNConfig& cfg,
                const std::vector<data::Sample>& samples, const data::LabelCodec& codec) {
    return evaluate_word(params, cfg, samples, codec).cer;
}

std::function<Tensor(nn::ModelParams&, const std::vector<data::Sample>&, nn::RunMode, Rng&)>
make_word_loss_fn(nn::WordCRNNConfig cfg, const data::LabelCodec& codec, bool use_graph_ctc) {
    return [cfg, &codec, use_graph_ctc](nn::ModelParams& params,
                                        const std::vector<data::Sample>& samples,
                                        nn::RunMode mode, Rng& rng) {
        std::vector<const data::Sample*> batch;
        std::vector<std::vector<int>> labels;
        for (const auto& s : samples) {
            batch.push_back(&s);
            labels.push_back(codec.encode(s.label));
        }
        Tensor logp = word_crnn_forward(stack_images(batch, cfg.input_h, cfg.input_w), params, cfg,
                                        mode, rng);
        return use_graph_ctc ? ctc::ctc_loss_graph(logp, labels).loss
                             : ctc::ctc_loss(logp, labels).loss;
    };
}

}  // namespace geez::train
