#pragma once

#include <functional>
#include <string>
#include <vector>

#include "geez/data.hpp"
#include "geez/nn.hpp"
#include "geez/rng.hpp"
#include "geez/tensor.hpp"

namespace geez::meta {

// One adaptation unit: disjoint support/query sets drawn from a single style.
struct Task {
    std::vector<data::Sample> support;
    std::vector<data::Sample> query;
    std::string style_id;
};

// first_order: inner loop uses Adam and the dependence of the adapted
// parameters on the initialization is cut (FOMAML). second_order: inner loop
// uses plain recorded gradient steps so the meta-gradient differentiates
// exactly through the adaptation.
enum class MetaMode { first_order, second_order };

struct MetaConfig {
    int num_tasks = 100;
    int task_size = 50;
    double support_fraction = 0.5;
    int inner_steps = 1;
    double alpha = 0.001;  // inner learning rate
    double beta = 0.001;   // outer learning rate
    int meta_batch = 5;
    int epochs = 100;
    MetaMode mode = MetaMode::first_order;

    void validate() const;
};

// Differentiable task loss: evaluates the model under the given parameters on
// a sample set, recording onto the active tape.
using LossFn = std::function<Tensor(nn::ModelParams&, const std::vector<data::Sample>&,
                                    nn::RunMode, Rng&)>;

// Groups samples by style, draws task_size per task from one style (tasks
// cycle through styles), splits support/query by support_fraction.
std::vector<Task> make_tasks(const std::vector<data::Sample>& dataset, const MetaConfig& cfg,
                             Rng& rng);

// Task-specific adaptation: clones theta and takes inner_steps Adam updates
// on the support loss. theta itself is never touched.
nn::ModelParams inner_adapt(const nn::ModelParams& theta,
                            const std::vector<data::Sample>& support, const MetaConfig& cfg,
                            const LossFn& loss_fn, Rng& rng);

// Second-order path: the returned parameters are recorded functions of
// theta's tensors (plain gradient steps built on the active tape), so a later
// backward differentiates through the adaptation. Requires an active
// TapeScope on `tape`.
nn::ModelParams inner_adapt_recorded(const nn::ModelParams& theta,
                                     const std::vector<data::Sample>& support,
                                     const MetaConfig& cfg, const LossFn& loss_fn, Tape& tape,
                                     Rng& rng);

// One outer update from a batch of tasks; returns the mean query meta-loss.
double meta_step(nn::ModelParams& theta, const std::vector<const Task*>& batch,
                 const MetaConfig& cfg, const LossFn& loss_fn, nn::Adam& outer, Rng& rng);

struct MetaEpochLog {
    int epoch = 0;
    double meta_loss = 0.0;
    double seconds = 0.0;
};

struct MetaTrainResult {
    nn::ModelParams params;
    std::vector<MetaEpochLog> log;
};

MetaTrainResult meta_train_tasks(const std::vector<Task>& tasks, nn::ModelParams theta,
                                 const MetaConfig& cfg, const LossFn& loss_fn, Rng& rng,
                                 bool verbose = false);

MetaTrainResult meta_train(const std::vector<data::Sample>& dataset, nn::ModelParams theta,
                           const MetaConfig& cfg, const LossFn& loss_fn, Rng& rng,
                           bool verbose = false);

// Fraction of tasks whose query metric strictly improves after one
// inner_adapt from theta; the metric callback is typically corpus CER.
using TaskMetricFn =
    std::function<double(nn::ModelParams&, const std::vector<data::Sample>&)>;

struct AdaptationGain {
    int improved = 0;
    int total = 0;
    std::vector<double> before;  // unadapted query metric per task
    std::vector<double> after;   // adapted query metric per task

    double fraction_improved() const {
        return total == 0 ? 0.0 : static_cast<double>(improved) / total;
    }
};

AdaptationGain evaluate_adaptation(const nn::ModelParams& theta, const std::vector<Task>& tasks,
                                   const MetaConfig& cfg, const LossFn& loss_fn,
                                   const TaskMetricFn& metric, Rng& rng);

}  // namespace geez::meta
