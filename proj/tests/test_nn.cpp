#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fd_check.hpp"
#include "geez/ctc.hpp"
#include "geez/nn.hpp"
#include "geez/ops.hpp"
#include "geez/rng.hpp"

using namespace geez;
using namespace geez::nn;

namespace {

Tensor random_tensor(Rng& rng, Shape s, bool requires_grad = true, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(s), requires_grad);
    for (auto& v : t.mutable_values()) v = rng.uniform(lo, hi);
    return t;
}

void check_grads(const std::function<Tensor()>& build, std::vector<Tensor> inputs, double rtol,
                 double h = 1e-5) {
    for (Tensor& in : inputs) in.zero_grad();
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = build();
    }
    tape.backward(loss);
    for (Tensor& in : inputs) {
        REQUIRE(in.has_grad());
        auto numeric = testutil::numeric_grad([&] { return build().item(); }, in, h);
        CAPTURE(testutil::grad_mismatch(in.grad(), numeric, rtol));
        CHECK(testutil::grads_match(in.grad(), numeric, rtol));
    }
}

}  // namespace

TEST_CASE("dense layer basics and gradients") {
    Tensor x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor w0 = Tensor::zeros({2, 2});
    Tensor b = Tensor::from_values({2}, {1.0, 2.0});
    Tensor y = dense(x, w0, b);
    for (int i = 0; i < 3; ++i) {
        CHECK(y.at({i, 0}) == doctest::Approx(1.0));
        CHECK(y.at({i, 1}) == doctest::Approx(2.0));
    }

    Tensor id = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor zb = Tensor::zeros({2});
    CHECK(dense(x, id, zb).values() == x.values());

    Rng rng(1);
    Tensor xr = random_tensor(rng, {2, 3});
    Tensor wr = random_tensor(rng, {3, 4});
    Tensor br = random_tensor(rng, {4});
    Tensor probe = random_tensor(rng, {2, 4}, false);
    check_grads([&] { return sum(mul(dense(xr, wr, br), probe)); }, {xr, wr, br}, 1e-6);
}

TEST_CASE("batchnorm normalizes in train mode and applies the affine") {
    Rng rng(2);
    const int N = 4, C = 3, H = 5, W = 5;
    Tensor x = random_tensor(rng, {N, C, H, W}, false, 0.0, 1.0);
    Tensor gamma = Tensor::full({C}, 1.0);
    Tensor beta = Tensor::zeros({C});
    Tensor rm = Tensor::zeros({C});
    Tensor rv = Tensor::full({C}, 1.0);
    Tensor y = batchnorm(x, gamma, beta, rm, rv, RunMode::train);

    const int M = N * H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        for (int n = 0; n < N; ++n) {
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) mean += y.at({n, c, i, j});
            }
        }
        mean /= M;
        for (int n = 0; n < N; ++n) {
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) {
                    const double d = y.at({n, c, i, j}) - mean;
                    var += d * d;
                }
            }
        }
        var /= M;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    // affine on standardized input: mean 3, std 2
    Tensor gamma2 = Tensor::full({C}, 2.0);
    Tensor beta2 = Tensor::full({C}, 3.0);
    Tensor rm2 = Tensor::zeros({C});
    Tensor rv2 = Tensor::full({C}, 1.0);
    Tensor y2 = batchnorm(x, gamma2, beta2, rm2, rv2, RunMode::train);
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        for (int n = 0; n < N; ++n) {
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) mean += y2.at({n, c, i, j});
            }
        }
        mean /= M;
        for (int n = 0; n < N; ++n) {
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) {
                    const double d = y2.at({n, c, i, j}) - mean;
                    var += d * d;
                }
            }
        }
        var /= M;
        CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm rejects train-mode batch of one") {
    Tensor x = Tensor::zeros({1, 2, 3, 3});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor rm = Tensor::zeros({2});
    Tensor rv = Tensor::full({2}, 1.0);
    CHECK_THROWS_AS(batchnorm(x, gamma, beta, rm, rv, RunMode::train), std::invalid_argument);
    // frozen-stat modes accept any batch
    CHECK_NOTHROW(batchnorm(x, gamma, beta, rm, rv, RunMode::eval));
}

TEST_CASE("batchnorm gradients match finite differences") {
    Rng rng(3);
    const Shape s = {3, 2, 4, 4};
    Tensor x = random_tensor(rng, s);
    Tensor gamma = random_tensor(rng, {2}, true, 0.5, 1.5);
    Tensor beta = random_tensor(rng, {2});
    Tensor probe = random_tensor(rng, s, false);

    SUBCASE("train mode (batch statistics)") {
        auto build = [&] {
            Tensor rm = Tensor::zeros({2});
            Tensor rv = Tensor::full({2}, 1.0);
            return sum(mul(batchnorm(x, gamma, beta, rm, rv, RunMode::train), probe));
        };
        check_grads(build, {x, gamma, beta}, 1e-5);
    }
    SUBCASE("frozen statistics") {
        Tensor rm = random_tensor(rng, {2}, false);
        Tensor rv = random_tensor(rng, {2}, false, 0.5, 2.0);
        auto build = [&] {
            return sum(mul(batchnorm(x, gamma, beta, rm, rv, RunMode::adapt), probe));
        };
        check_grads(build, {x, gamma, beta}, 1e-5);
    }
}

TEST_CASE("dropout modes") {
    Rng rng(4);
    Tensor x = random_tensor(rng, {100}, false);

    Rng r1(9);
    CHECK(dropout(x, 0.0, RunMode::train, r1).values() == x.values());
    CHECK(dropout(x, 0.5, RunMode::eval, r1).values() == x.values());

    Tensor big = Tensor::full({100000}, 1.0);
    Rng r2(10);
    Tensor dropped = dropout(big, 0.25, RunMode::train, r2);
    int survivors = 0;
    double total = 0.0;
    for (double v : dropped.values()) {
        if (v != 0.0) {
            ++survivors;
            CHECK(v == doctest::Approx(1.0 / 0.75));
        }
        total += v;
    }
    const double survivor_frac = survivors / 100000.0;
    CHECK(std::abs(survivor_frac - 0.75) < 0.01);
    CHECK(std::abs(total / 100000.0 - 1.0) < 0.01);  // inverted scaling keeps the mean
}

TEST_CASE("lstm cell zeros, gate saturation, and gradients") {
    const int N = 2, D = 3, H = 4;
    Tensor x0 = Tensor::zeros({N, D});
    Tensor h0 = Tensor::zeros({N, H});
    Tensor c0 = Tensor::zeros({N, H});
    Tensor w0 = Tensor::zeros({D + H, 4 * H});
    Tensor b0 = Tensor::zeros({4 * H});
    auto [h1, c1] = lstm_cell(x0, h0, c0, w0, b0);
    for (double v : h1.values()) CHECK(v == doctest::Approx(0.0));
    for (double v : c1.values()) CHECK(v == doctest::Approx(0.0));

    // input gate saturated closed: c_t ~= f * c_prev
    Rng rng(5);
    Tensor c_prev = random_tensor(rng, {N, H}, false);
    Tensor x = random_tensor(rng, {N, D}, false);
    Tensor h_prev = random_tensor(rng, {N, H}, false);
    Tensor b_gate = Tensor::zeros({4 * H});
    for (int i = 0; i < H; ++i) b_gate.mutable_values()[static_cast<std::size_t>(i)] = -40.0;
    auto [h2, c2] = lstm_cell(x, h_prev, c_prev, w0, b_gate);
    for (int n = 0; n < N; ++n) {
        for (int i = 0; i < H; ++i) {
            CHECK(c2.at({n, i}) == doctest::Approx(0.5 * c_prev.at({n, i})).epsilon(1e-8));
        }
    }

    Tensor wr = random_tensor(rng, {D + H, 4 * H}, true, -0.4, 0.4);
    Tensor br = random_tensor(rng, {4 * H}, true, -0.2, 0.2);
    Tensor xr = random_tensor(rng, {N, D});
    Tensor probe = random_tensor(rng, {N, H}, false);
    auto build = [&] {
        auto [h, c] = lstm_cell(xr, h_prev.detached(), c_prev.detached(), wr, br);
        return sum(mul(h, probe));
    };
    check_grads(build, {wr, br, xr}, 1e-5);
}

TEST_CASE("bilstm degenerate single step uses both directions") {
    Rng rng(6);
    const int N = 2, D = 3, H = 2;
    ModelParams p;
    WordCRNNConfig unused;
    (void)unused;
    Tensor w = random_tensor(rng, {D + H, 4 * H}, false, -0.5, 0.5);
    Tensor b = random_tensor(rng, {4 * H}, false, -0.2, 0.2);
    p.add("seq/l0_fwd/w", w.clone());
    p.add("seq/l0_fwd/b", b.clone());
    p.add("seq/l0_bwd/w", w.clone());
    p.add("seq/l0_bwd/b", b.clone());

    Tensor x = random_tensor(rng, {N, D}, false);
    Rng drng(1);
    auto out = bilstm({x}, p, "seq", 1, H, 0.0, RunMode::eval, drng);
    REQUIRE(out.size() == 1);
    // tied weights + single step: forward and backward halves are equal
    for (int n = 0; n < N; ++n) {
        for (int i = 0; i < H; ++i) {
            CHECK(out[0].at({n, i}) == doctest::Approx(out[0].at({n, H + i})));
        }
    }
}

TEST_CASE("bilstm with tied weights is reversal-symmetric") {
    Rng rng(7);
    const int N = 1, D = 2, H = 3, T = 5;
    ModelParams p;
    Tensor w = random_tensor(rng, {D + H, 4 * H}, false, -0.5, 0.5);
    Tensor b = random_tensor(rng, {4 * H}, false, -0.2, 0.2);
    p.add("seq/l0_fwd/w", w.clone());
    p.add("seq/l0_fwd/b", b.clone());
    p.add("seq/l0_bwd/w", w.clone());
    p.add("seq/l0_bwd/b", b.clone());

    std::vector<Tensor> seq(T), rev(T);
    for (int t = 0; t < T; ++t) seq[static_cast<std::size_t>(t)] = random_tensor(rng, {N, D}, false);
    for (int t = 0; t < T; ++t) rev[static_cast<std::size_t>(t)] = seq[static_cast<std::size_t>(T - 1 - t)];

    Rng d1(1), d2(1);
    auto out = bilstm(seq, p, "seq", 1, H, 0.0, RunMode::eval, d1);
    auto out_rev = bilstm(rev, p, "seq", 1, H, 0.0, RunMode::eval, d2);
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < H; ++i) {
            CHECK(out_rev[static_cast<std::size_t>(t)].at({0, i}) ==
                  doctest::Approx(out[static_cast<std::size_t>(T - 1 - t)].at({0, H + i})));
            CHECK(out_rev[static_cast<std::size_t>(t)].at({0, H + i}) ==
                  doctest::Approx(out[static_cast<std::size_t>(T - 1 - t)].at({0, i})));
        }
    }
}

TEST_CASE("bilstm stack gradients match finite differences") {
    Rng rng(8);
    const int N = 1, D = 2, H = 2, T = 3;
    ModelParams p;
    std::vector<Tensor> weights;
    for (int layer = 0; layer < 2; ++layer) {
        const int d_in = layer == 0 ? D : 2 * H;
        for (const char* dir : {"fwd", "bwd"}) {
            Tensor w = random_tensor(rng, {d_in + H, 4 * H}, true, -0.5, 0.5);
            Tensor b = random_tensor(rng, {4 * H}, true, -0.2, 0.2);
            const std::string base = "seq/l" + std::to_string(layer) + "_" + dir;
            p.add(base + "/w", w);
            p.add(base + "/b", b);
            weights.push_back(w);
            weights.push_back(b);
        }
    }
    std::vector<Tensor> seq(T);
    for (auto& s : seq) s = random_tensor(rng, {N, D}, false);
    Tensor probe = random_tensor(rng, {N, 2 * H}, false);
    auto build = [&] {
        Rng drng(3);
        auto out = bilstm(seq, p, "seq", 2, H, 0.0, RunMode::eval, drng);
        Tensor acc = sum(mul(out[0], probe));
        for (std::size_t t = 1; t < out.size(); ++t) acc = add(acc, sum(mul(out[t], probe)));
        return acc;
    };
    check_grads(build, weights, 1e-4);
}

TEST_CASE("residual block with zero main branch is relu of input") {
    const int C = 3;
    ModelParams p;
    p.add("rb/conv1/w", Tensor::zeros({C, C, 3, 3}, true));
    p.add("rb/conv1/b", Tensor::zeros({C}, true));
    p.add("rb/bn1/gamma", Tensor::full({C}, 1.0, true));
    p.add("rb/bn1/beta", Tensor::zeros({C}, true));
    p.add("rb/bn1/running_mean", Tensor::zeros({C}));
    p.add("rb/bn1/running_var", Tensor::full({C}, 1.0));
    p.add("rb/conv2/w", Tensor::zeros({C, C, 3, 3}, true));
    p.add("rb/conv2/b", Tensor::zeros({C}, true));
    p.add("rb/bn2/gamma", Tensor::full({C}, 1.0, true));
    p.add("rb/bn2/beta", Tensor::zeros({C}, true));
    p.add("rb/bn2/running_mean", Tensor::zeros({C}));
    p.add("rb/bn2/running_var", Tensor::full({C}, 1.0));
    // equal channels: no projection entry, skip is identity

    Rng rng(9);
    Tensor x = random_tensor(rng, {2, C, 4, 4}, true);
    Rng drng(1);
    Tensor y = residual_block(x, p, "rb", 1, 1, 0.0, RunMode::train, drng);
    Tensor expect = relu(x);
    for (std::size_t i = 0; i < y.values().size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(expect.values()[i]));
    }

    // gradient flows through the skip even though the main branch is zero
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        Rng dr2(1);
        loss = sum(residual_block(x, p, "rb", 1, 1, 0.0, RunMode::train, dr2));
    }
    tape.backward(loss);
    double norm = 0.0;
    for (double g : x.grad()) norm += std::abs(g);
    CHECK(norm > 0.1);
}

TEST_CASE("word model shape walk hits 2x32 and T=32") {
    WordCRNNConfig cfg;
    cfg.num_classes = 5;
    CHECK(cfg.time_steps() == 32);
    CHECK(cfg.feature_height() == 2);

    WordCRNNConfig reduced;
    reduced.block_channels = {16, 32, 64, 128};
    reduced.lstm_hidden = 64;
    reduced.num_classes = 5;
    CHECK(reduced.time_steps() == 32);
}

TEST_CASE("char model forward: normalized rows and the 256-wide flatten") {
    CharCNNConfig cfg;
    cfg.num_classes = 10;
    Rng rng(42);
    ModelParams p = char_cnn_init(cfg, rng);
    CHECK(p.at("fc1/w").shape() == Shape{256, 512});

    Tensor imgs = Tensor::zeros({2, 1, 28, 28});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);
    Rng drng(1);
    Tensor logp = char_cnn_forward(imgs, p, cfg, RunMode::eval, drng);
    REQUIRE(logp.shape() == Shape{2, 10});
    for (int n = 0; n < 2; ++n) {
        double s = 0.0;
        for (int c = 0; c < 10; ++c) s += std::exp(logp.at({n, c}));
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    Tensor bad = Tensor::zeros({1, 1, 27, 27});
    CHECK_THROWS_AS(char_cnn_forward(bad, p, cfg, RunMode::eval, drng), std::invalid_argument);
}

TEST_CASE("tiny char model gradients match finite differences") {
    CharCNNConfig cfg;
    cfg.input_h = cfg.input_w = 8;
    cfg.conv_channels = {2, 3};
    cfg.fc_units = {6, 5};
    cfg.num_classes = 3;
    cfg.dropout_fc = 0.0;
    Rng rng(11);
    ModelParams p = char_cnn_init(cfg, rng);

    Tensor imgs = Tensor::zeros({2, 1, 8, 8});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);
    const std::vector<int> labels = {1, 2};

    auto build = [&] {
        Rng drng(5);
        return nll_loss(char_cnn_forward(imgs, p, cfg, RunMode::train, drng), labels);
    };
    check_grads(build, p.trainable(), 1e-3);
}

TEST_CASE("word model forward shape and per-frame normalization") {
    WordCRNNConfig cfg;
    cfg.block_channels = {4, 8, 12, 16};
    cfg.lstm_hidden = 6;
    cfg.num_classes = 4;
    Rng rng(12);
    ModelParams p = word_crnn_init(cfg, rng);

    Tensor imgs = Tensor::zeros({2, 1, 32, 128});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);
    Rng drng(2);
    Tensor logp = word_crnn_forward(imgs, p, cfg, RunMode::eval, drng);
    REQUIRE(logp.shape() == Shape{32, 2, 5});
    for (int t = 0; t < 32; t += 7) {
        for (int n = 0; n < 2; ++n) {
            double s = 0.0;
            for (int c = 0; c < 5; ++c) s += std::exp(logp.at({t, n, c}));
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("micro word model end-to-end CTC gradients match finite differences") {
    WordCRNNConfig cfg;
    cfg.input_h = 8;
    cfg.input_w = 16;
    cfg.block_channels = {3, 6};
    cfg.pool_schedule = {{2, 2}, {2, 2}};
    cfg.lstm_hidden = 3;
    cfg.lstm_layers = 2;
    cfg.dropout = 0.0;
    cfg.num_classes = 2;
    REQUIRE(cfg.time_steps() == 4);

    Rng rng(13);
    ModelParams p = word_crnn_init(cfg, rng);
    Tensor imgs = Tensor::zeros({2, 1, 8, 16});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);
    const std::vector<std::vector<int>> labels = {{0, 1}, {1}};

    auto build = [&] {
        Rng drng(7);
        Tensor logp = word_crnn_forward(imgs, p, cfg, RunMode::train, drng);
        return ctc::ctc_loss(logp, labels).loss;
    };
    check_grads(build, p.trainable(), 1e-3);
}

TEST_CASE("optimizers: worked examples and descent") {
    SUBCASE("sgd single step") {
        ModelParams p;
        Tensor theta = Tensor::scalar(1.0, true);
        p.add("theta", theta);
        theta.accumulate_grad(std::vector<double>{2.0}.data(), 1);
        Sgd(0.1).step(p);
        CHECK(theta.item() == doctest::Approx(0.8));
    }
    SUBCASE("adam first step has magnitude ~lr") {
        ModelParams p;
        Tensor theta = Tensor::scalar(5.0, true);
        p.add("theta", theta);
        Adam adam({.lr = 0.01}, p);
        theta.accumulate_grad(std::vector<double>{3.7}.data(), 1);
        adam.step(p);
        CHECK(theta.item() == doctest::Approx(5.0 - 0.01).epsilon(1e-4));
    }
    SUBCASE("adam drives a quadratic toward zero") {
        ModelParams p;
        Tensor theta = Tensor::scalar(1.0, true);
        p.add("theta", theta);
        Adam adam({.lr = 0.1}, p);
        for (int i = 0; i < 100; ++i) {
            p.zero_grad();
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                loss = sum(mul(theta, theta));
            }
            tape.backward(loss);
            adam.step(p);
        }
        CHECK(std::abs(theta.item()) < 0.05);
    }
    SUBCASE("missing gradient is an error") {
        ModelParams p;
        p.add("theta", Tensor::scalar(1.0, true));
        Adam adam({}, p);
        CHECK_THROWS_AS(adam.step(p), std::invalid_argument);
    }
}

TEST_CASE("checkpoint round trip is bit exact and strict on schemas") {
    namespace fs = std::filesystem;
    const fs::path tmp = fs::temp_directory_path() / "geez_nn_ckpt_test";
    fs::create_directories(tmp);

    CharCNNConfig cfg;
    cfg.num_classes = 4;
    cfg.conv_channels = {2, 4};
    cfg.input_h = cfg.input_w = 8;
    cfg.fc_units = {6, 5};
    Rng rng(14);
    ModelParams p = char_cnn_init(cfg, rng);
    save_checkpoint(p, tmp / "m.ckpt");
    ModelParams back = load_checkpoint(tmp / "m.ckpt");
    REQUIRE(back.entries().size() == p.entries().size());
    for (std::size_t i = 0; i < p.entries().size(); ++i) {
        CHECK(back.entries()[i].first == p.entries()[i].first);
        CHECK(back.entries()[i].second.values() == p.entries()[i].second.values());
    }
    CHECK_NOTHROW(validate_checkpoint(back, p));

    // corrupt magic
    {
        std::fstream f(tmp / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(tmp / "m.ckpt")),
                         doctest::Contains("bad magic"), std::runtime_error);

    // truncated file
    save_checkpoint(p, tmp / "t.ckpt");
    fs::resize_file(tmp / "t.ckpt", fs::file_size(tmp / "t.ckpt") / 2);
    CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(tmp / "t.ckpt")),
                         doctest::Contains("truncated"), std::runtime_error);

    // char checkpoint against word model schema: unknown names
    WordCRNNConfig wcfg;
    wcfg.block_channels = {2, 4, 6, 8};
    wcfg.lstm_hidden = 3;
    wcfg.num_classes = 3;
    ModelParams wp = word_crnn_init(wcfg, rng);
    save_checkpoint(p, tmp / "c.ckpt");
    ModelParams char_params = load_checkpoint(tmp / "c.ckpt");
    CHECK_THROWS_WITH_AS(validate_checkpoint(char_params, wp), doctest::Contains("unknown"),
                         std::runtime_error);

    fs::remove_all(tmp);
}

TEST_CASE("initialization is seed-deterministic and eval passes are pure") {
    CharCNNConfig cfg;
    cfg.num_classes = 5;
    Rng r1(99), r2(99);
    ModelParams a = char_cnn_init(cfg, r1);
    ModelParams b = char_cnn_init(cfg, r2);
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        CHECK(a.entries()[i].second.values() == b.entries()[i].second.values());
    }

    Rng rng(100);
    Tensor imgs = Tensor::zeros({2, 1, 28, 28});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);
    Rng d1(1), d2(1);
    Tensor y1 = char_cnn_forward(imgs, a, cfg, RunMode::eval, d1);
    Tensor y2 = char_cnn_forward(imgs, a, cfg, RunMode::eval, d2);
    CHECK(y1.values() == y2.values());
}

TEST_CASE("cloned parameters diverge independently") {
    CharCNNConfig cfg;
    cfg.input_h = cfg.input_w = 8;
    cfg.conv_channels = {2, 3};
    cfg.fc_units = {4, 4};
    cfg.num_classes = 3;
    cfg.dropout_fc = 0.0;
    Rng rng(15);
    ModelParams original = char_cnn_init(cfg, rng);
    ModelParams copy = original.clone();

    Tensor imgs = Tensor::zeros({2, 1, 8, 8});
    for (auto& v : imgs.mutable_values()) v = rng.uniform(0.0, 1.0);

    Adam opt({.lr = 0.05}, copy);
    copy.zero_grad();
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        Rng drng(1);
        loss = nll_loss(char_cnn_forward(imgs, copy, cfg, RunMode::train, drng), {0, 1});
    }
    tape.backward(loss);
    opt.step(copy);

    // original untouched, copy moved
    CHECK(original.at("fc3/w").values() != copy.at("fc3/w").values());
    CHECK_FALSE(original.at("fc3/w").has_grad());
}

TEST_CASE("checkpoint byte layout: magic, little-endian version, name, rank, dims") {
    namespace fs = std::filesystem;
    const fs::path tmp = fs::temp_directory_path() / "geez_nn_layout.ckpt";
    ModelParams p;
    p.add("a/w", Tensor::from_values({1, 2}, {1.5, -2.0}, true));
    save_checkpoint(p, tmp);

    std::ifstream in(tmp, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    // magic + u32 version=1 + u32 count=1
    REQUIRE(bytes.size() == 4u + 4 + 4 + 2 + 3 + 1 + 2 * 4 + 2 * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GZOC");
    CHECK(bytes[4] == 1);  // version, little-endian
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 1);  // entry count
    CHECK(bytes[12] == 3);  // name length u16 LE
    CHECK(bytes[13] == 0);
    CHECK(std::string(bytes.begin() + 14, bytes.begin() + 17) == "a/w");
    CHECK(bytes[17] == 2);  // rank
    CHECK(bytes[18] == 1);  // dim0 = 1
    CHECK(bytes[22] == 2);  // dim1 = 2
    double v0;
    std::memcpy(&v0, bytes.data() + 26, 8);
    CHECK(v0 == 1.5);  // IEEE-754 little-endian payload
    fs::remove(tmp);
}
