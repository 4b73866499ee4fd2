#include "geez/meta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "geez/ops.hpp"

namespace geez::meta {

namespace {

using Clock = std::chrono::steady_clock;

}  // namespace

void MetaConfig::validate() const {
    if (support_fraction <= 0.0 || support_fraction >= 1.0) {
        throw std::invalid_argument("meta: support_fraction must lie in (0,1)");
    }
    if (inner_steps < 1) throw std::invalid_argument("meta: inner_steps must be >= 1");
    if (meta_batch < 1 || meta_batch > num_tasks) {
        throw std::invalid_argument("meta: meta_batch must lie in [1, num_tasks]");
    }
    if (num_tasks < 1 || task_size < 2) {
        throw std::invalid_argument("meta: need at least one task of at least two samples");
    }
}

std::vector<Task> make_tasks(const std::vector<data::Sample>& dataset, const MetaConfig& cfg,
                             Rng& rng) {
    cfg.validate();
    std::vector<std::string> styles;
    std::unordered_map<std::string, std::vector<std::size_t>> by_style;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto [it, fresh] = by_style.try_emplace(dataset[i].style_id);
        if (fresh) styles.push_back(dataset[i].style_id);
        it->second.push_back(i);
    }
    if (styles.empty()) throw std::invalid_argument("make_tasks: empty dataset");

    const int support_n =
        static_cast<int>(std::llround(cfg.support_fraction * cfg.task_size));
    if (support_n < 1 || support_n >= cfg.task_size) {
        throw std::invalid_argument("make_tasks: support fraction leaves an empty side");
    }

    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(cfg.num_tasks));
    for (int t = 0; t < cfg.num_tasks; ++t) {
        const std::string& style = styles[static_cast<std::size_t>(t) % styles.size()];
        auto& pool = by_style[style];
        if (static_cast<int>(pool.size()) < cfg.task_size) {
            throw std::invalid_argument("make_tasks: style '" + style + "' has " +
                                        std::to_string(pool.size()) + " samples, task needs " +
                                        std::to_string(cfg.task_size));
        }
        rng.shuffle(pool);
        Task task;
        task.style_id = style;
        for (int k = 0; k < cfg.task_size; ++k) {
            const data::Sample& s = dataset[pool[static_cast<std::size_t>(k)]];
            if (k < support_n) {
                task.support.push_back(s);
            } else {
                task.query.push_back(s);
            }
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

nn::ModelParams inner_adapt(const nn::ModelParams& theta,
                            const std::vector<data::Sample>& support, const MetaConfig& cfg,
                            const LossFn& loss_fn, Rng& rng) {
    if (support.empty()) throw std::invalid_argument("inner_adapt: empty support set");
    nn::ModelParams adapted = theta.clone();
    nn::Adam inner({.lr = cfg.alpha}, adapted);
    for (int step = 0; step < cfg.inner_steps; ++step) {
        adapted.zero_grad();
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = loss_fn(adapted, support, nn::RunMode::adapt, rng);
        }
        tape.backward(loss);
        inner.step(adapted);
    }
    adapted.zero_grad();
    return adapted;
}

nn::ModelParams inner_adapt_recorded(const nn::ModelParams& theta,
                                     const std::vector<data::Sample>& support,
                                     const MetaConfig& cfg, const LossFn& loss_fn, Tape& tape,
                                     Rng& rng) {
    if (support.empty()) throw std::invalid_argument("inner_adapt: empty support set");
    if (current_tape() != &tape) {
        throw std::logic_error("inner_adapt_recorded: tape must be the active recording scope");
    }
    // Handle copies: adapted trainable entries are replaced with recorded
    // expressions of theta's tensors, buffers stay shared (frozen in adapt
    // mode).
    nn::ModelParams current;
    for (const auto& [name, tensor] : theta.entries()) current.add(name, tensor);

    for (int step = 0; step < cfg.inner_steps; ++step) {
        Tensor loss = loss_fn(current, support, nn::RunMode::adapt, rng);
        std::vector<Tensor> wrt = current.trainable();
        std::vector<Tensor> grads = tape.grad(loss, wrt);

        nn::ModelParams next;
        std::size_t gi = 0;
        for (const auto& [name, tensor] : current.entries()) {
            if (nn::ModelParams::is_buffer(name)) {
                next.add(name, tensor);
            } else {
                next.add(name, sub(tensor, scale(grads[gi], cfg.alpha)));
                ++gi;
            }
        }
        current = std::move(next);
    }
    return current;
}

double meta_step(nn::ModelParams& theta, const std::vector<const Task*>& batch,
                 const MetaConfig& cfg, const LossFn& loss_fn, nn::Adam& outer, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("meta_step: empty task batch");
    const double inv = 1.0 / static_cast<double>(batch.size());
    double mean_loss = 0.0;
    theta.zero_grad();

    if (cfg.mode == MetaMode::first_order) {
        for (const Task* task : batch) {
            Rng task_rng = rng.fork(0x7a51);
            nn::ModelParams adapted = inner_adapt(theta, task->support, cfg, loss_fn, task_rng);
            adapted.zero_grad();
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                loss = loss_fn(adapted, task->query, nn::RunMode::adapt, task_rng);
            }
            tape.backward(loss);
            mean_loss += loss.item() * inv;

            // FOMAML: the query gradient at the adapted point is applied to
            // the initialization. Parameters the loss never reached get zero.
            auto theta_train = theta.trainable();
            auto adapted_train = adapted.trainable();
            std::vector<double> scaled;
            for (std::size_t p = 0; p < theta_train.size(); ++p) {
                if (!adapted_train[p].has_grad()) continue;
                const auto& g = adapted_train[p].grad();
                scaled.assign(g.size(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = g[i] * inv;
                theta_train[p].accumulate_grad(scaled.data(),
                                               static_cast<std::int64_t>(scaled.size()));
            }
        }
    } else {
        Tape tape;
        TapeScope scope(tape);
        Tensor total;
        for (const Task* task : batch) {
            Rng task_rng = rng.fork(0x7a51);
            nn::ModelParams adapted =
                inner_adapt_recorded(theta, task->support, cfg, loss_fn, tape, task_rng);
            Tensor loss = loss_fn(adapted, task->query, nn::RunMode::adapt, task_rng);
            total = total.defined() ? add(total, loss) : loss;
        }
        Tensor meta_loss = scale(total, inv);
        mean_loss = meta_loss.item();
        tape.backward(meta_loss);
    }

    // Unreached parameters step with an explicit zero gradient.
    for (Tensor& t : theta.trainable()) {
        if (!t.has_grad()) {
            const std::vector<double> zeros(static_cast<std::size_t>(t.size()), 0.0);
            t.accumulate_grad(zeros.data(), t.size());
        }
    }
    outer.step(theta);
    theta.zero_grad();
    return mean_loss;
}

MetaTrainResult meta_train_tasks(const std::vector<Task>& tasks, nn::ModelParams theta,
                                 const MetaConfig& cfg, const LossFn& loss_fn, Rng& rng,
                                 bool verbose) {
    cfg.validate();
    if (tasks.empty()) throw std::invalid_argument("meta_train: no tasks");
    MetaTrainResult res{std::move(theta), {}};
    nn::Adam outer({.lr = cfg.beta}, res.params);

    std::vector<std::size_t> order(tasks.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        rng.shuffle(order);
        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.meta_batch)) {
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(cfg.meta_batch));
            std::vector<const Task*> batch;
            for (std::size_t k = at; k < end; ++k) batch.push_back(&tasks[order[k]]);
            loss_sum += meta_step(res.params, batch, cfg, loss_fn, outer, rng);
            ++steps;
        }
        MetaEpochLog log;
        log.epoch = epoch;
        log.meta_loss = loss_sum / std::max(1, steps);
        log.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        if (!std::isfinite(log.meta_loss)) {
            throw std::runtime_error("meta_train: non-finite meta-loss at epoch " +
                                     std::to_string(epoch));
        }
        if (verbose) {
            std::fprintf(stderr, "meta epoch %3d  loss %.4f  (%.1fs)\n", epoch, log.meta_loss,
                         log.seconds);
        }
        res.log.push_back(log);
    }
    return res;
}

MetaTrainResult meta_train(const std::vector<data::Sample>& dataset, nn::ModelParams theta,
                           const MetaConfig& cfg, const LossFn& loss_fn, Rng& rng, bool verbose) {
    const auto tasks = make_tasks(dataset, cfg, rng);
    return meta_train_tasks(tasks, std::move(theta), cfg, loss_fn, rng, verbose);
}

AdaptationGain evaluate_adaptation(const nn::ModelParams& theta, const std::vector<Task>& tasks,
                                   const MetaConfig& cfg, const LossFn& loss_fn,
                                   const TaskMetricFn& metric, Rng& rng) {
    AdaptationGain gain;
    for (const Task& task : tasks) {
        Rng task_rng = rng.fork(0xe7a1);
        nn::ModelParams base = theta.clone();
        const double before = metric(base, task.query);
        nn::ModelParams adapted = inner_adapt(theta, task.support, cfg, loss_fn, task_rng);
        const double after = metric(adapted, task.query);
        gain.before.push_back(before);
        gain.after.push_back(after);
        if (after < before) ++gain.improved;
        ++gain.total;
    }
    return gain;
}

}  // namespace geez::meta
