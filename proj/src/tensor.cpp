#include "geez/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "geez/kernels.hpp"
#include "geez/ops.hpp"

namespace geez {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

std::shared_ptr<TensorData> make_data(Shape s, bool requires_grad) {
    if (s.empty() || s.size() > 4) {
        throw std::invalid_argument("tensor rank must be 1-4, got " + shape_str(s));
    }
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(s));
    }
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(s);
    d->requires_grad = requires_grad;
    return d;
}

thread_local Tape* g_current_tape = nullptr;
thread_local bool g_recording = true;

}  // namespace

Tensor Tensor::zeros(Shape s, bool requires_grad) {
    auto d = make_data(std::move(s), requires_grad);
    d->v.assign(static_cast<std::size_t>(numel(d->shape)), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape s, double value, bool requires_grad) {
    auto d = make_data(std::move(s), requires_grad);
    d->v.assign(static_cast<std::size_t>(numel(d->shape)), value);
    return Tensor(std::move(d));
}

Tensor Tensor::from_values(Shape s, std::vector<double> v, bool requires_grad) {
    auto d = make_data(std::move(s), requires_grad);
    if (static_cast<std::int64_t>(v.size()) != numel(d->shape)) {
        throw std::invalid_argument("value count " + std::to_string(v.size()) +
                                    " does not match shape " + shape_str(d->shape));
    }
    d->v = std::move(v);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_values({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return d_->v[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        throw std::invalid_argument("at(): index rank mismatch");
    }
    std::int64_t flat = 0;
    int k = 0;
    for (int i : idx) {
        if (i < 0 || i >= d_->shape[static_cast<std::size_t>(k)]) {
            throw std::invalid_argument("at(): index out of range");
        }
        flat = flat * d_->shape[static_cast<std::size_t>(k)] + i;
        ++k;
    }
    return d_->v[static_cast<std::size_t>(flat)];
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw std::runtime_error("tensor has no gradient");
    return d_->g;
}

void Tensor::zero_grad() {
    if (d_) d_->g.clear();
}

void Tensor::accumulate_grad(const double* g, std::int64_t n) {
    if (n != size()) throw std::invalid_argument("gradient size mismatch");
    if (d_->g.empty()) d_->g.assign(d_->v.size(), 0.0);
    kernels::active().axpy(1.0, g, d_->g.data(), d_->v.size());
}

Tensor Tensor::clone() const {
    auto d = std::make_shared<TensorData>();
    d->shape = d_->shape;
    d->v = d_->v;
    d->requires_grad = d_->requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::detached() const {
    Tensor t = clone();
    t.d_->requires_grad = false;
    return t;
}

TapeScope::TapeScope(Tape& t) : prev_(g_current_tape) { g_current_tape = &t; }
TapeScope::~TapeScope() { g_current_tape = prev_; }

NoRecordScope::NoRecordScope() : prev_(g_recording) { g_recording = false; }
NoRecordScope::~NoRecordScope() { g_recording = prev_; }

Tape* current_tape() { return g_current_tape; }
bool recording_enabled() { return g_recording; }

void Tape::append(std::vector<Tensor> inputs, const Tensor& output, BackwardRule rule) {
    output.data()->tape = this;
    output.data()->node = static_cast<int>(nodes_.size());
    nodes_.push_back(TapeNode{std::move(inputs), output, std::move(rule)});
}

namespace detail {

Tensor finish_op(std::vector<Tensor> inputs, Tensor output, BackwardRule rule) {
    if (g_current_tape != nullptr && g_recording) {
        bool any = false;
        for (const Tensor& in : inputs) {
            if (in.requires_grad()) {
                any = true;
                break;
            }
        }
        if (any) {
            output.set_requires_grad(true);
            g_current_tape->append(std::move(inputs), output, std::move(rule));
        }
    }
    return output;
}

}  // namespace detail

// Per-run gradient accumulation state. `owned` marks sums allocated by the
// engine, which may be updated in place; first contributions are held by
// handle and must not be mutated (a rule may route one tensor to two inputs).
struct Tape::Flow {
    struct Acc {
        Tensor t;
        bool owned = false;
    };
    std::unordered_map<TensorData*, Acc> map;
    bool build_graph = false;

    class Sink final : public GradSink {
    public:
        Sink(Flow& f, TapeNode& n) : flow_(f), node_(n) {}

        bool needs(int i) const override {
            return node_.inputs[static_cast<std::size_t>(i)].requires_grad();
        }

        void add(int i, const Tensor& contribution) override {
            const Tensor& in = node_.inputs[static_cast<std::size_t>(i)];
            if (!in.requires_grad()) return;
            if (contribution.size() != in.size()) {
                throw std::runtime_error("backward rule produced gradient of wrong size");
            }
            auto it = flow_.map.find(in.data());
            if (it == flow_.map.end()) {
                flow_.map.emplace(in.data(), Acc{contribution, false});
                return;
            }
            if (flow_.build_graph) {
                it->second = Acc{geez::add(it->second.t, contribution), false};
            } else if (!it->second.owned) {
                Tensor sum = it->second.t.clone();
                kernels::active().axpy(1.0, contribution.values().data(),
                                       sum.mutable_values().data(), sum.values().size());
                sum.set_requires_grad(false);
                it->second = Acc{sum, true};
            } else {
                kernels::active().axpy(1.0, contribution.values().data(),
                                       it->second.t.mutable_values().data(),
                                       it->second.t.values().size());
            }
        }

    private:
        Flow& flow_;
        TapeNode& node_;
    };
};

void Tape::run(const Tensor& loss, bool build_graph, Flow& flow) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    if (loss.data()->tape != this || loss.data()->node < 0) {
        throw std::invalid_argument("backward: loss tensor was not recorded on this tape");
    }
    flow.build_graph = build_graph;
    flow.map.emplace(loss.data(), Flow::Acc{Tensor::scalar(1.0), false});

    for (int idx = loss.data()->node; idx >= 0; --idx) {
        // Copy: graph-building rules append to nodes_, which may reallocate.
        TapeNode node = nodes_[static_cast<std::size_t>(idx)];
        auto it = flow.map.find(node.output.data());
        if (it == flow.map.end()) continue;
        Tensor gy = it->second.t;
        Flow::Sink sink(flow, node);
        if (build_graph) {
            node.backward(gy, sink);
        } else {
            NoRecordScope no_record;
            node.backward(gy, sink);
        }
    }
}

void Tape::backward(const Tensor& loss) {
    Flow flow;
    run(loss, false, flow);
    for (auto& [data, acc] : flow.map) {
        if (data->node < 0 && data->requires_grad) {
            if (data->g.empty()) data->g.assign(data->v.size(), 0.0);
            kernels::active().axpy(1.0, acc.t.values().data(), data->g.data(), data->g.size());
        }
    }
}

std::vector<Tensor> Tape::grad(const Tensor& loss, const std::vector<Tensor>& wrt) {
    TapeScope scope(*this);
    Flow flow;
    run(loss, true, flow);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const Tensor& w : wrt) {
        auto it = flow.map.find(w.data());
        if (it != flow.map.end()) {
            out.push_back(it->second.t);
        } else {
            out.push_back(Tensor::zeros(w.shape()));
        }
    }
    return out;
}

void check_finite(const Tensor& t, const char* what) {
    for (double x : t.values()) {
        if (!std::isfinite(x)) {
            throw std::runtime_error(std::string(what) + ": non-finite value encountered");
        }
    }
    if (t.has_grad()) {
        for (double x : t.grad()) {
            if (!std::isfinite(x)) {
                throw std::runtime_error(std::string(what) + ": non-finite gradient encountered");
            }
        }
    }
}

}  // namespace geez
