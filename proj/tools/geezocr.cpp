// geezocr: command-line driver wiring the dataset tools, the two recognition
// models, meta-training, and the evaluation protocol into reproducible runs.
// Every run directory receives a fully resolved config echo, a training log,
// and the final checkpoint, enough to reproduce the run bit for bit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geez/ctc.hpp"
#include "geez/data.hpp"
#include "geez/meta.hpp"
#include "geez/metrics.hpp"
#include "geez/nn.hpp"
#include "geez/train.hpp"
#include "geez/utf8.hpp"

namespace fs = std::filesystem;
using namespace geez;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_config_echo(const fs::path& out_dir, const std::string& command, KeyValues kv) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config echo under " + out_dir.string());
    out << "command=" << command << "\n";
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

template <typename Log>
void write_train_log(const fs::path& path, const Log& log, const char* metric_name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch\tloss\t" << metric_name << "\tseconds\n";
    for (const auto& e : log) {
        out << e.epoch << '\t' << fmt_double(e.loss) << '\t' << fmt_double(e.metric) << '\t'
            << fmt_double(e.seconds) << '\n';
    }
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::size_t at = 0;
    while (at < csv.size()) {
        const std::size_t comma = csv.find(',', at);
        out.push_back(std::stoi(csv.substr(at, comma - at)));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    return out;
}

std::vector<std::pair<int, int>> pool_schedule_for(std::size_t blocks) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < blocks; ++i) {
        out.push_back(i < 2 ? std::make_pair(2, 2) : std::make_pair(2, 1));
    }
    return out;
}

// Model hyperparameters are recoverable from checkpoint tensor shapes.
nn::CharCNNConfig infer_char_config(const nn::ModelParams& p, int input_h, int input_w) {
    nn::CharCNNConfig cfg;
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.conv_channels.clear();
    for (int k = 1; p.has("conv" + std::to_string(k) + "/w"); ++k) {
        cfg.conv_channels.push_back(p.at("conv" + std::to_string(k) + "/w").dim(0));
    }
    if (cfg.conv_channels.empty()) {
        throw std::runtime_error("checkpoint does not look like a character model");
    }
    cfg.fc_units = {p.at("fc1/w").dim(1), p.at("fc2/w").dim(1)};
    cfg.num_classes = p.at("fc3/w").dim(1);
    return cfg;
}

nn::WordCRNNConfig infer_word_config(const nn::ModelParams& p, int input_h, int input_w) {
    nn::WordCRNNConfig cfg;
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.block_channels.clear();
    for (int k = 1; p.has("block" + std::to_string(k) + "/conv1/w"); ++k) {
        cfg.block_channels.push_back(p.at("block" + std::to_string(k) + "/conv1/w").dim(0));
    }
    if (cfg.block_channels.empty()) {
        throw std::runtime_error("checkpoint does not look like a word model");
    }
    cfg.pool_schedule = pool_schedule_for(cfg.block_channels.size());
    cfg.lstm_hidden = p.at("lstm/l0_fwd/w").dim(1) / 4;
    cfg.lstm_layers = 0;
    while (p.has("lstm/l" + std::to_string(cfg.lstm_layers) + "_fwd/w")) ++cfg.lstm_layers;
    cfg.num_classes = p.at("head/w").dim(1) - 1;
    return cfg;
}

struct DatasetArgs {
    std::string data_dir;
    std::string charset_file;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args) {
    cmd->add_option("--data", args.data_dir, "Dataset directory (images/ + labels.tsv)")
        ->required();
    cmd->add_option("--charset", args.charset_file,
                    "Charset file, one character per line (line number = class index)")
        ->required();
}

std::pair<data::LabelCodec, std::vector<data::Sample>> load_data(const DatasetArgs& args) {
    auto codec = data::LabelCodec::load(args.charset_file);
    auto samples = data::load_dataset(args.data_dir, codec);
    return {std::move(codec), std::move(samples)};
}

// ------------------------------- synth ------------------------------------

struct SynthArgs {
    std::string out_dir;
    int classes = 10;
    int per_class = 50;
    int styles = 10;
    std::string kind = "char";
    int charset_size = 10;
    std::uint64_t seed = 42;
};

int run_synth(const SynthArgs& a) {
    Rng rng(a.seed);
    const auto kind = a.kind == "word" ? data::SynthKind::word : data::SynthKind::character;
    auto synth = data::synth_generate(a.classes, a.per_class, a.styles, kind, rng, a.charset_size);
    fs::create_directories(a.out_dir);
    data::save_dataset(a.out_dir, synth.samples);
    synth.codec.save(fs::path(a.out_dir) / "charset.txt");
    write_config_echo(a.out_dir, "synth",
                      {{"classes", std::to_string(a.classes)},
                       {"per_class", std::to_string(a.per_class)},
                       {"styles", std::to_string(a.styles)},
                       {"kind", a.kind},
                       {"charset_size", std::to_string(a.charset_size)},
                       {"seed", std::to_string(a.seed)}});
    std::printf("wrote %zu samples (%d classes, %d styles) to %s\n", synth.samples.size(),
                a.classes, a.styles, a.out_dir.c_str());
    return 0;
}

// ----------------------------- train-char ---------------------------------

struct TrainCharArgs {
    DatasetArgs data;
    std::string out_dir;
    int epochs = 20;
    int batch = 32;
    double lr = 0.001;
    std::uint64_t seed = 42;
    bool no_augment = false;
    double train_frac = 0.70;
    double val_frac = 0.15;
    bool quiet = false;
};

int run_train_char(const TrainCharArgs& a) {
    auto [codec, samples] = load_data(a.data);
    Rng split_rng = Rng::derive(a.seed, 0x5011);
    auto split = data::split_by_writer(
        samples, {a.train_frac, a.val_frac, 1.0 - a.train_frac - a.val_frac}, split_rng);

    nn::CharCNNConfig cfg;
    cfg.num_classes = codec.size();
    train::CharTrainOptions opts;
    opts.epochs = a.epochs;
    opts.batch_size = a.batch;
    opts.lr = a.lr;
    opts.seed = a.seed;
    opts.augment = !a.no_augment;
    opts.verbose = !a.quiet;

    auto result = train::train_char(split.train, codec, cfg, opts);

    const double train_acc = train::char_accuracy(result.params, cfg, split.train, codec);
    const double val_acc =
        split.val.empty() ? 0.0 : train::char_accuracy(result.params, cfg, split.val, codec);
    const double test_acc =
        split.test.empty() ? 0.0 : train::char_accuracy(result.params, cfg, split.test, codec);

    fs::create_directories(a.out_dir);
    nn::save_checkpoint(result.params, fs::path(a.out_dir) / "model.ckpt");
    write_train_log(fs::path(a.out_dir) / "train_log.tsv", result.log, "train_accuracy");
    const auto& eval_split = split.test.empty() ? split.train : split.test;
    write_text(fs::path(a.out_dir) / "metrics.json",
               train::evaluate_char(result.params, cfg, eval_split, codec).to_json());
    nlohmann::ordered_json summary;
    summary["train_accuracy"] = train_acc;
    summary["val_accuracy"] = val_acc;
    summary["test_accuracy"] = test_acc;
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump());
    write_config_echo(a.out_dir, "train-char",
                      {{"data", a.data.data_dir},
                       {"charset", a.data.charset_file},
                       {"epochs", std::to_string(a.epochs)},
                       {"batch", std::to_string(a.batch)},
                       {"lr", fmt_double(a.lr)},
                       {"augment", a.no_augment ? "0" : "1"},
                       {"train_frac", fmt_double(a.train_frac)},
                       {"val_frac", fmt_double(a.val_frac)},
                       {"seed", std::to_string(a.seed)}});
    std::printf("train %.4f | val %.4f | test %.4f  (accuracy)\n", train_acc, val_acc, test_acc);
    return 0;
}

// ----------------------------- train-word ---------------------------------

struct TrainWordArgs {
    DatasetArgs data;
    std::string out_dir;
    int epochs = 50;
    int batch = 16;
    double lr = 0.001;
    std::uint64_t seed = 42;
    bool augment = false;
    std::string blocks = "64,128,256,512";
    int lstm_hidden = 256;
    int lstm_layers = 2;
    double dropout = 0.25;
    double stop_cer = -1.0;
    int eval_every = 5;
    bool quiet = false;
};

int run_train_word(const TrainWordArgs& a) {
    auto [codec, samples] = load_data(a.data);

    nn::WordCRNNConfig cfg;
    cfg.block_channels = parse_int_list(a.blocks);
    cfg.pool_schedule = pool_schedule_for(cfg.block_channels.size());
    cfg.lstm_hidden = a.lstm_hidden;
    cfg.lstm_layers = a.lstm_layers;
    cfg.dropout = a.dropout;
    cfg.num_classes = codec.size();

    train::WordTrainOptions opts;
    opts.epochs = a.epochs;
    opts.batch_size = a.batch;
    opts.lr = a.lr;
    opts.seed = a.seed;
    opts.augment = a.augment;
    opts.stop_at_cer = a.stop_cer;
    opts.eval_every = a.eval_every;
    opts.verbose = !a.quiet;

    auto result = train::train_word(samples, codec, cfg, opts);

    fs::create_directories(a.out_dir);
    nn::save_checkpoint(result.params, fs::path(a.out_dir) / "model.ckpt");
    write_train_log(fs::path(a.out_dir) / "train_log.tsv", result.log, "train_cer");
    write_text(fs::path(a.out_dir) / "metrics.json",
               train::evaluate_word(result.params, cfg, samples, codec).to_json());
    write_config_echo(a.out_dir, "train-word",
                      {{"data", a.data.data_dir},
                       {"charset", a.data.charset_file},
                       {"epochs", std::to_string(a.epochs)},
                       {"batch", std::to_string(a.batch)},
                       {"lr", fmt_double(a.lr)},
                       {"augment", a.augment ? "1" : "0"},
                       {"blocks", a.blocks},
                       {"lstm_hidden", std::to_string(a.lstm_hidden)},
                       {"lstm_layers", std::to_string(a.lstm_layers)},
                       {"dropout", fmt_double(a.dropout)},
                       {"stop_cer", fmt_double(a.stop_cer)},
                       {"eval_every", std::to_string(a.eval_every)},
                       {"seed", std::to_string(a.seed)}});
    std::printf("final training CER %.4f\n", result.final_cer);
    return 0;
}

// ----------------------------- meta-train ---------------------------------

struct MetaTrainArgs {
    DatasetArgs data;
    std::string out_dir;
    int tasks = 100;
    int task_size = 50;
    double support_frac = 0.5;
    int inner_steps = 1;
    double alpha = 0.001;
    double beta = 0.001;
    int meta_batch = 5;
    int epochs = 100;
    std::string mode = "first";
    std::uint64_t seed = 42;
    std::string blocks = "64,128,256,512";
    int lstm_hidden = 256;
    int lstm_layers = 2;
    double dropout = 0.25;
    bool quiet = false;
};

int run_meta_train(const MetaTrainArgs& a) {
    auto [codec, samples] = load_data(a.data);

    nn::WordCRNNConfig mcfg;
    mcfg.block_channels = parse_int_list(a.blocks);
    mcfg.pool_schedule = pool_schedule_for(mcfg.block_channels.size());
    mcfg.lstm_hidden = a.lstm_hidden;
    mcfg.lstm_layers = a.lstm_layers;
    mcfg.dropout = a.dropout;
    mcfg.num_classes = codec.size();

    meta::MetaConfig cfg;
    cfg.num_tasks = a.tasks;
    cfg.task_size = a.task_size;
    cfg.support_fraction = a.support_frac;
    cfg.inner_steps = a.inner_steps;
    cfg.alpha = a.alpha;
    cfg.beta = a.beta;
    cfg.meta_batch = a.meta_batch;
    cfg.epochs = a.epochs;
    cfg.mode = a.mode == "second" ? meta::MetaMode::second_order : meta::MetaMode::first_order;

    Rng init_rng = Rng::derive(a.seed, 0x1217);
    nn::ModelParams theta = nn::word_crnn_init(mcfg, init_rng);
    auto loss_fn =
        train::make_word_loss_fn(mcfg, codec, cfg.mode == meta::MetaMode::second_order);
    Rng rng = Rng::derive(a.seed, 0x317a);
    auto result = meta::meta_train(samples, std::move(theta), cfg, loss_fn, rng, !a.quiet);

    fs::create_directories(a.out_dir);
    nn::save_checkpoint(result.params, fs::path(a.out_dir) / "model.ckpt");
    {
        std::ofstream log(fs::path(a.out_dir) / "meta_log.tsv", std::ios::binary);
        log << "epoch\tmean_meta_loss\tseconds\n";
        for (const auto& e : result.log) {
            log << e.epoch << '\t' << fmt_double(e.meta_loss) << '\t' << fmt_double(e.seconds)
                << '\n';
        }
    }
    write_config_echo(a.out_dir, "meta-train",
                      {{"data", a.data.data_dir},
                       {"charset", a.data.charset_file},
                       {"tasks", std::to_string(a.tasks)},
                       {"task_size", std::to_string(a.task_size)},
                       {"support_frac", fmt_double(a.support_frac)},
                       {"inner_steps", std::to_string(a.inner_steps)},
                       {"alpha", fmt_double(a.alpha)},
                       {"beta", fmt_double(a.beta)},
                       {"meta_batch", std::to_string(a.meta_batch)},
                       {"epochs", std::to_string(a.epochs)},
                       {"mode", a.mode},
                       {"blocks", a.blocks},
                       {"lstm_hidden", std::to_string(a.lstm_hidden)},
                       {"lstm_layers", std::to_string(a.lstm_layers)},
                       {"dropout", fmt_double(a.dropout)},
                       {"seed", std::to_string(a.seed)}});
    std::printf("meta-training finished: %d epochs, final mean meta-loss %.4f\n", a.epochs,
                result.log.empty() ? 0.0 : result.log.back().meta_loss);
    return 0;
}

// ------------------------------ evaluate ----------------------------------

struct EvaluateArgs {
    DatasetArgs data;
    std::string checkpoint;
    std::string out_dir;
    std::string arch = "word";
    std::string decoder = "greedy";
    int beam_width = 8;
    int input_h = 0;  // 0: per-arch default
    int input_w = 0;
};

int run_evaluate(const EvaluateArgs& a) {
    auto [codec, samples] = load_data(a.data);
    nn::ModelParams loaded = nn::load_checkpoint(a.checkpoint);

    metrics::MetricsReport report;
    if (a.arch == "char") {
        const auto cfg = infer_char_config(loaded, a.input_h > 0 ? a.input_h : 28,
                                           a.input_w > 0 ? a.input_w : 28);
        if (cfg.num_classes != codec.size()) {
            throw std::runtime_error("charset has " + std::to_string(codec.size()) +
                                     " classes but the checkpoint expects " +
                                     std::to_string(cfg.num_classes));
        }
        Rng rng(0);
        nn::ModelParams expected = nn::char_cnn_init(cfg, rng);
        nn::validate_checkpoint(loaded, expected);
        report = train::evaluate_char(loaded, cfg, samples, codec);
    } else if (a.arch == "word") {
        const auto cfg = infer_word_config(loaded, a.input_h > 0 ? a.input_h : 32,
                                           a.input_w > 0 ? a.input_w : 128);
        if (cfg.num_classes != codec.size()) {
            throw std::runtime_error("charset has " + std::to_string(codec.size()) +
                                     " classes but the checkpoint expects " +
                                     std::to_string(cfg.num_classes));
        }
        Rng rng(0);
        nn::ModelParams expected = nn::word_crnn_init(cfg, rng);
        nn::validate_checkpoint(loaded, expected);
        report = train::evaluate_word(loaded, cfg, samples, codec,
                                      a.decoder == "beam" ? train::Decoder::beam
                                                          : train::Decoder::greedy,
                                      a.beam_width);
    } else {
        throw std::runtime_error("evaluate: --arch must be 'char' or 'word'");
    }

    const std::string json = report.to_json();
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        write_text(fs::path(a.out_dir) / "metrics.json", json);
        write_config_echo(a.out_dir, "evaluate",
                          {{"data", a.data.data_dir},
                           {"charset", a.data.charset_file},
                           {"checkpoint", a.checkpoint},
                           {"arch", a.arch},
                           {"decoder", a.decoder},
                           {"beam_width", std::to_string(a.beam_width)},
                           {"seed", "0"}});
    }
    std::printf("%s\n", json.c_str());
    return 0;
}

// ------------------------------- predict ----------------------------------

struct PredictArgs {
    std::string charset_file;
    std::string checkpoint;
    std::string arch = "word";
    std::string decoder = "greedy";
    int beam_width = 8;
    std::vector<std::string> images;
};

int run_predict(const PredictArgs& a) {
    auto codec = data::LabelCodec::load(a.charset_file);
    nn::ModelParams loaded = nn::load_checkpoint(a.checkpoint);

    std::vector<data::Sample> samples;
    for (const auto& path : a.images) {
        const auto img = data::read_pgm(path);
        data::Sample s;
        s.height = img.height;
        s.width = img.width;
        s.pixels.resize(img.bytes.size());
        double mean = 0.0;
        for (std::size_t i = 0; i < img.bytes.size(); ++i) {
            s.pixels[i] = static_cast<double>(img.bytes[i]) / 255.0;
            mean += s.pixels[i];
        }
        if (mean / static_cast<double>(s.pixels.size()) > 0.5) {
            for (double& v : s.pixels) v = 1.0 - v;
        }
        samples.push_back(std::move(s));
    }

    std::vector<std::string> decoded;
    if (a.arch == "char") {
        const auto cfg = infer_char_config(loaded, 28, 28);
        decoded = train::predict_char(loaded, cfg, samples, codec);
    } else {
        const auto cfg = infer_word_config(loaded, 32, 128);
        decoded = train::predict_word(loaded, cfg, samples, codec,
                                      a.decoder == "beam" ? train::Decoder::beam
                                                          : train::Decoder::greedy,
                                      a.beam_width);
    }
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        std::printf("%s\t%s\n", a.images[i].c_str(), decoded[i].c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ge'ez handwritten script recognition toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Optional key=value config file");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic glyph dataset");
    synth_cmd->add_option("--out", synth.out_dir, "Output dataset directory")->required();
    synth_cmd->add_option("--classes", synth.classes, "Character classes (or word vocabulary)");
    synth_cmd->add_option("--per-class", synth.per_class, "Samples per class");
    synth_cmd->add_option("--styles", synth.styles, "Distinct synthetic handwriting styles");
    synth_cmd->add_option("--kind", synth.kind, "char or word")
        ->check(CLI::IsMember({"char", "word"}));
    synth_cmd->add_option("--charset-size", synth.charset_size,
                          "Glyph inventory for word mode");
    synth_cmd->add_option("--seed", synth.seed, "Master seed");

    TrainCharArgs tchar;
    auto* tchar_cmd = app.add_subcommand("train-char", "Train the character classifier");
    add_dataset_options(tchar_cmd, tchar.data);
    tchar_cmd->add_option("--out", tchar.out_dir, "Run directory")->required();
    tchar_cmd->add_option("--epochs", tchar.epochs, "Training epochs");
    tchar_cmd->add_option("--batch", tchar.batch, "Batch size");
    tchar_cmd->add_option("--lr", tchar.lr, "Adam learning rate");
    tchar_cmd->add_option("--seed", tchar.seed, "Master seed");
    tchar_cmd->add_flag("--no-augment", tchar.no_augment, "Disable training augmentation");
    tchar_cmd->add_option("--train-frac", tchar.train_frac, "Training split fraction");
    tchar_cmd->add_option("--val-frac", tchar.val_frac, "Validation split fraction");
    tchar_cmd->add_flag("--quiet", tchar.quiet, "Suppress per-epoch progress");

    TrainWordArgs tword;
    auto* tword_cmd = app.add_subcommand("train-word", "Train the word recognizer (CTC)");
    add_dataset_options(tword_cmd, tword.data);
    tword_cmd->add_option("--out", tword.out_dir, "Run directory")->required();
    tword_cmd->add_option("--epochs", tword.epochs, "Training epochs");
    tword_cmd->add_option("--batch", tword.batch, "Batch size");
    tword_cmd->add_option("--lr", tword.lr, "Adam learning rate");
    tword_cmd->add_option("--seed", tword.seed, "Master seed");
    tword_cmd->add_flag("--augment", tword.augment, "Enable training augmentation");
    tword_cmd->add_option("--blocks", tword.blocks, "Residual block channels, comma separated");
    tword_cmd->add_option("--lstm-hidden", tword.lstm_hidden, "LSTM units per direction");
    tword_cmd->add_option("--lstm-layers", tword.lstm_layers, "Stacked BiLSTM layers");
    tword_cmd->add_option("--dropout", tword.dropout, "Dropout rate");
    tword_cmd->add_option("--stop-cer", tword.stop_cer,
                          "Stop early once training CER reaches this (negative: off)");
    tword_cmd->add_option("--eval-every", tword.eval_every, "Epochs between CER measurements");
    tword_cmd->add_flag("--quiet", tword.quiet, "Suppress per-epoch progress");

    MetaTrainArgs mt;
    auto* mt_cmd = app.add_subcommand("meta-train", "MAML meta-training of the word recognizer");
    add_dataset_options(mt_cmd, mt.data);
    mt_cmd->add_option("--out", mt.out_dir, "Run directory")->required();
    mt_cmd->add_option("--tasks", mt.tasks, "Number of meta-tasks");
    mt_cmd->add_option("--task-size", mt.task_size, "Samples per task");
    mt_cmd->add_option("--support-frac", mt.support_frac, "Support fraction within a task");
    mt_cmd->add_option("--inner-steps", mt.inner_steps, "Inner-loop updates per task");
    mt_cmd->add_option("--alpha", mt.alpha, "Inner-loop learning rate");
    mt_cmd->add_option("--beta", mt.beta, "Outer-loop learning rate");
    mt_cmd->add_option("--meta-batch", mt.meta_batch, "Tasks per outer update");
    mt_cmd->add_option("--epochs", mt.epochs, "Meta-training epochs");
    mt_cmd->add_option("--mode", mt.mode, "first (FOMAML+Adam) or second (exact, SGD inner)")
        ->check(CLI::IsMember({"first", "second"}));
    mt_cmd->add_option("--seed", mt.seed, "Master seed");
    mt_cmd->add_option("--blocks", mt.blocks, "Residual block channels, comma separated");
    mt_cmd->add_option("--lstm-hidden", mt.lstm_hidden, "LSTM units per direction");
    mt_cmd->add_option("--lstm-layers", mt.lstm_layers, "Stacked BiLSTM layers");
    mt_cmd->add_option("--dropout", mt.dropout, "Dropout rate");
    mt_cmd->add_flag("--quiet", mt.quiet, "Suppress per-epoch progress");

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    add_dataset_options(ev_cmd, ev.data);
    ev_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
    ev_cmd->add_option("--out", ev.out_dir, "Optional run directory for metrics.json");
    ev_cmd->add_option("--arch", ev.arch, "char or word")
        ->check(CLI::IsMember({"char", "word"}));
    ev_cmd->add_option("--decoder", ev.decoder, "greedy or beam")
        ->check(CLI::IsMember({"greedy", "beam"}));
    ev_cmd->add_option("--beam-width", ev.beam_width, "Beam width for beam decoding");
    ev_cmd->add_option("--input-h", ev.input_h, "Override model input height");
    ev_cmd->add_option("--input-w", ev.input_w, "Override model input width");

    PredictArgs pr;
    auto* pr_cmd = app.add_subcommand("predict", "Decode PGM images with a checkpoint");
    pr_cmd->add_option("--charset", pr.charset_file, "Charset file")->required();
    pr_cmd->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
    pr_cmd->add_option("--arch", pr.arch, "char or word")
        ->check(CLI::IsMember({"char", "word"}));
    pr_cmd->add_option("--decoder", pr.decoder, "greedy or beam")
        ->check(CLI::IsMember({"greedy", "beam"}));
    pr_cmd->add_option("--beam-width", pr.beam_width, "Beam width for beam decoding");
    pr_cmd->add_option("images", pr.images, "PGM images to decode")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (tchar_cmd->parsed()) return run_train_char(tchar);
        if (tword_cmd->parsed()) return run_train_word(tword);
        if (mt_cmd->parsed()) return run_meta_train(mt);
        if (ev_cmd->parsed()) return run_evaluate(ev);
        if (pr_cmd->parsed()) return run_predict(pr);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
