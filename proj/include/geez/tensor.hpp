#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace geez {

// Dense n-dimensional array shape, rank 1-4, row-major storage.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

struct TensorData {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // numeric gradient, sized on first accumulation
    bool requires_grad = false;
    Tape* tape = nullptr;  // producing tape; null for leaves
    int node = -1;
};

// Cheap handle to shared storage. clone() deep-copies; plain copies alias.
// All numeric computation in the toolkit runs on 64-bit reals.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor full(Shape s, double value, bool requires_grad = false);
    static Tensor from_values(Shape s, std::vector<double> v, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(d_->v.size()); }

    const std::vector<double>& values() const { return d_->v; }
    // Direct storage access for initialization, optimizers and running stats.
    // Mutating a tensor that already participates in a recorded graph is not
    // supported.
    std::vector<double>& mutable_values() { return d_->v; }

    double item() const;
    double at(std::initializer_list<int> idx) const;

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    bool has_grad() const { return d_ && !d_->g.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();
    void accumulate_grad(const double* g, std::int64_t n);

    // Deep copy sharing no storage; detached from any tape.
    Tensor clone() const;
    // Deep copy with requires_grad off; used to freeze values as constants.
    Tensor detached() const;

    bool is_leaf() const { return d_->node < 0; }
    TensorData* data() const { return d_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;
};

// Receives gradient contributions for a node's inputs during backward.
class GradSink {
public:
    virtual bool needs(int input_index) const = 0;
    virtual void add(int input_index, const Tensor& contribution) = 0;

protected:
    ~GradSink() = default;
};

using BackwardRule = std::function<void(const Tensor& output_grad, GradSink& sink)>;

struct TapeNode {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule backward;
};

// Define-by-run record of one forward computation. Rebuilt per pass; confined
// to one logical thread. Nodes are appended in execution order, so every
// node's inputs precede it and a reverse sweep visits each node once.
//
// Backward rules are themselves written in terms of tensor ops, which makes
// grad() able to record the gradient computation back onto the tape: the
// returned gradients are differentiable functions of the original inputs
// (used for differentiating through inner-loop adaptation steps).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int size() const { return static_cast<int>(nodes_.size()); }

    // Reverse accumulation from a scalar loss; adds into the numeric .grad()
    // of every requires_grad leaf reached. Gradient of the loss w.r.t. itself
    // is 1; fan-out accumulates additively.
    void backward(const Tensor& loss);

    // Graph-building reverse pass: returns d loss / d wrt[i] as tensors whose
    // computation is recorded on this tape. Does not touch numeric grads.
    std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt);

    void append(std::vector<Tensor> inputs, const Tensor& output, BackwardRule rule);

private:
    struct Flow;
    void run(const Tensor& loss, bool build_graph, Flow& flow);
    std::vector<TapeNode> nodes_;
};

// RAII: makes a tape the recording target for ops on this thread.
class TapeScope {
public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// RAII: temporarily disables recording (numeric backward, eval passes).
class NoRecordScope {
public:
    NoRecordScope();
    ~NoRecordScope();
    NoRecordScope(const NoRecordScope&) = delete;

private:
    bool prev_;
};

Tape* current_tape();
bool recording_enabled();

// Throws if any value (or gradient) is NaN/Inf.
void check_finite(const Tensor& t, const char* what);

namespace detail {
// Records the op if a tape is active, recording is enabled and any input
// requires grad; otherwise returns the output as a detached constant.
Tensor finish_op(std::vector<Tensor> inputs, Tensor output, BackwardRule rule);
}  // namespace detail

}  // namespace geez
