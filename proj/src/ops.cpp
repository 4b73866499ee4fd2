#include "geez/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

#include "geez/kernels.hpp"

namespace geez {

namespace {

const kernels::Backend& kb() { return kernels::active(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

void require_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                    shape_str(a.shape()));
    }
}

Tensor unary_map(const Tensor& x, double (*f)(double)) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
    return out;
}

// out = x > 0 ? g : 0. Gradient flows to g only; the mask location input x
// contributes no gradient of its own.
Tensor relu_mask(const Tensor& x, const Tensor& g) {
    require_same_shape(x, g, "relu_mask");
    Tensor out = Tensor::zeros(x.shape());
    kb().relu_mask(x.values().data(), g.values().data(), out.mutable_values().data(),
                   out.values().size());
    return detail::finish_op({x, g}, out, [x](const Tensor& gy, GradSink& sink) {
        if (sink.needs(1)) sink.add(1, relu_mask(x, gy));
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    kb().add(a.values().data(), b.values().data(), out.mutable_values().data(),
             out.values().size());
    return detail::finish_op({a, b}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, gy);
        if (sink.needs(1)) sink.add(1, gy);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    kb().sub(a.values().data(), b.values().data(), out.mutable_values().data(),
             out.values().size());
    return detail::finish_op({a, b}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, gy);
        if (sink.needs(1)) sink.add(1, neg(gy));
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    kb().mul(a.values().data(), b.values().data(), out.mutable_values().data(),
             out.values().size());
    return detail::finish_op({a, b}, out, [a, b](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(gy, b));
        if (sink.needs(1)) sink.add(1, mul(gy, a));
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.mutable_values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] / bv[i];
    return detail::finish_op({a, b}, out, [b, out](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, div(gy, b));
        // d/db (a/b) = -a/b² = -out/b
        if (sink.needs(1)) sink.add(1, neg(mul(gy, div(out, b))));
    });
}

Tensor neg(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    kb().scale(x.values().data(), -1.0, out.mutable_values().data(), out.values().size());
    return detail::finish_op({x}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, neg(gy));
    });
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    kb().scale(x.values().data(), c, out.mutable_values().data(), out.values().size());
    return detail::finish_op({x}, out, [c](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, scale(gy, c));
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] + c;
    return detail::finish_op({x}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, gy);
    });
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    kb().relu(x.values().data(), out.mutable_values().data(), out.values().size());
    return detail::finish_op({x}, out, [x](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, relu_mask(x, gy));
    });
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        if (v >= 0.0) {
            ov[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            ov[i] = e / (1.0 + e);
        }
    }
    return detail::finish_op({x}, out, [out](const Tensor& gy, GradSink& sink) {
        // y(1-y)
        if (sink.needs(0)) sink.add(0, mul(gy, mul(out, add_scalar(neg(out), 1.0))));
    });
}

Tensor tanh(const Tensor& x) {
    Tensor out = unary_map(x, [](double v) { return std::tanh(v); });
    return detail::finish_op({x}, out, [out](const Tensor& gy, GradSink& sink) {
        // 1 - y²
        if (sink.needs(0)) sink.add(0, mul(gy, add_scalar(neg(mul(out, out)), 1.0)));
    });
}

Tensor exp(const Tensor& x) {
    Tensor out = unary_map(x, [](double v) { return std::exp(v); });
    return detail::finish_op({x}, out, [out](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(gy, out));
    });
}

Tensor log(const Tensor& x) {
    for (double v : x.values()) {
        if (!(v > 0.0)) throw std::domain_error("log: input must be strictly positive");
    }
    Tensor out = unary_map(x, [](double v) { return std::log(v); });
    return detail::finish_op({x}, out, [x](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, div(gy, x));
    });
}

Tensor sqrt(const Tensor& x) {
    for (double v : x.values()) {
        if (v < 0.0) throw std::domain_error("sqrt: input must be non-negative");
    }
    Tensor out = unary_map(x, [](double v) { return std::sqrt(v); });
    return detail::finish_op({x}, out, [out](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, scale(div(gy, out), 0.5));
    });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "logaddexp");
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.mutable_values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        double hi = av[i], lo = bv[i];
        if (hi < lo) std::swap(hi, lo);
        ov[i] = hi <= kLogZero ? kLogZero : hi + std::log1p(std::exp(lo - hi));
    }
    return detail::finish_op({a, b}, out, [a, b, out](const Tensor& gy, GradSink& sink) {
        // Softmax weights exp(a-y), exp(b-y); dead (floored) outputs get 0.
        Tensor alive = Tensor::zeros(out.shape());
        auto& mv = alive.mutable_values();
        const auto& yv = out.values();
        for (std::size_t i = 0; i < yv.size(); ++i) mv[i] = yv[i] > kLogZero ? 1.0 : 0.0;
        if (sink.needs(0)) sink.add(0, mul(mul(gy, exp(sub(a, out))), alive));
        if (sink.needs(1)) sink.add(1, mul(mul(gy, exp(sub(b, out))), alive));
    });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_scalar(gy, xs));
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum_rows(const Tensor& x) {
    require_rank2(x, "sum_rows");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({n});
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        kb().axpy(1.0, xv + static_cast<std::size_t>(i) * n, ov, static_cast<std::size_t>(n));
    }
    return detail::finish_op({x}, out, [m](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_rows(gy, m));
    });
}

Tensor sum_cols(const Tensor& x) {
    require_rank2(x, "sum_cols");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({m});
    const double* xv = x.values().data();
    auto& ov = out.mutable_values();
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = xv + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j];
        ov[static_cast<std::size_t>(i)] = acc;
    }
    return detail::finish_op({x}, out, [n](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_cols(gy, n));
    });
}

Tensor broadcast_rows(const Tensor& v, int m) {
    if (v.rank() != 1) throw std::invalid_argument("broadcast_rows: expected rank-1 tensor");
    const int n = v.dim(0);
    Tensor out = Tensor::zeros({m, n});
    auto& ov = out.mutable_values();
    for (int i = 0; i < m; ++i) {
        std::memcpy(ov.data() + static_cast<std::size_t>(i) * n, v.values().data(),
                    sizeof(double) * static_cast<std::size_t>(n));
    }
    return detail::finish_op({v}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum_rows(gy));
    });
}

Tensor broadcast_cols(const Tensor& v, int n) {
    if (v.rank() != 1) throw std::invalid_argument("broadcast_cols: expected rank-1 tensor");
    const int m = v.dim(0);
    Tensor out = Tensor::zeros({m, n});
    auto& ov = out.mutable_values();
    const auto& vv = v.values();
    for (int i = 0; i < m; ++i) {
        double* row = ov.data() + static_cast<std::size_t>(i) * n;
        const double c = vv[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) row[j] = c;
    }
    return detail::finish_op({v}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum_cols(gy));
    });
}

Tensor broadcast_scalar(const Tensor& s, Shape shape) {
    if (s.size() != 1) throw std::invalid_argument("broadcast_scalar: expected scalar");
    Tensor out = Tensor::full(shape, s.item());
    return detail::finish_op({s}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum(gy));
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                    " × " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    kb().gemm(a.values().data(), b.values().data(), out.mutable_values().data(),
              static_cast<std::size_t>(m), static_cast<std::size_t>(k),
              static_cast<std::size_t>(n));
    return detail::finish_op({a, b}, out, [a, b](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, matmul_nt(gy, b));
        if (sink.needs(1)) sink.add(1, matmul_tn(a, gy));
    });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_tn");
    require_rank2(b, "matmul_tn");
    const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul_tn: inner dimensions disagree, " +
                                    shape_str(a.shape()) + "ᵀ × " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    kb().gemm_tn(a.values().data(), b.values().data(), out.mutable_values().data(),
                 static_cast<std::size_t>(m), static_cast<std::size_t>(k),
                 static_cast<std::size_t>(n));
    return detail::finish_op({a, b}, out, [a, b](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, matmul_nt(b, gy));
        if (sink.needs(1)) sink.add(1, matmul(a, gy));
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree, " +
                                    shape_str(a.shape()) + " × " + shape_str(b.shape()) + "ᵀ");
    }
    Tensor out = Tensor::zeros({m, n});
    kb().gemm_nt(a.values().data(), b.values().data(), out.mutable_values().data(),
                 static_cast<std::size_t>(m), static_cast<std::size_t>(k),
                 static_cast<std::size_t>(n));
    return detail::finish_op({a, b}, out, [a, b](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, matmul(gy, b));
        if (sink.needs(1)) sink.add(1, matmul_tn(gy, a));
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({n, m});
    const double* av = a.values().data();
    double* ov = out.mutable_values().data();
    constexpr int kBlock = 48;
    for (int i0 = 0; i0 < m; i0 += kBlock) {
        const int i1 = std::min(m, i0 + kBlock);
        for (int j0 = 0; j0 < n; j0 += kBlock) {
            const int j1 = std::min(n, j0 + kBlock);
            for (int i = i0; i < i1; ++i) {
                for (int j = j0; j < j1; ++j) {
                    ov[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
                }
            }
        }
    }
    return detail::finish_op({a}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, transpose(gy));
    });
}

Tensor reshape(const Tensor& x, Shape s) {
    if (numel(s) != x.size()) {
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(x.shape()) +
                                    " -> " + shape_str(s));
    }
    Tensor out = Tensor::from_values(s, x.values());
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, reshape(gy, xs));
    });
}

Tensor slice_rows(const Tensor& a, int start, int len) {
    require_rank2(a, "slice_rows");
    const int m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > m) {
        throw std::invalid_argument("slice_rows: range out of bounds");
    }
    Tensor out = Tensor::zeros({len, n});
    std::memcpy(out.mutable_values().data(),
                a.values().data() + static_cast<std::size_t>(start) * n,
                sizeof(double) * static_cast<std::size_t>(len) * n);
    return detail::finish_op({a}, out, [m, start](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, pad_rows(gy, m, start));
    });
}

Tensor pad_rows(const Tensor& a, int total, int start) {
    require_rank2(a, "pad_rows");
    const int len = a.dim(0), n = a.dim(1);
    if (start < 0 || start + len > total) throw std::invalid_argument("pad_rows: range out of bounds");
    Tensor out = Tensor::zeros({total, n});
    std::memcpy(out.mutable_values().data() + static_cast<std::size_t>(start) * n,
                a.values().data(), sizeof(double) * static_cast<std::size_t>(len) * n);
    return detail::finish_op({a}, out, [start, len](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, slice_rows(gy, start, len));
    });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
    require_rank2(a, "slice_cols");
    const int m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > n) {
        throw std::invalid_argument("slice_cols: range out of bounds");
    }
    Tensor out = Tensor::zeros({m, len});
    const double* av = a.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        std::memcpy(ov + static_cast<std::size_t>(i) * len,
                    av + static_cast<std::size_t>(i) * n + start,
                    sizeof(double) * static_cast<std::size_t>(len));
    }
    return detail::finish_op({a}, out, [n, start](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, pad_cols(gy, n, start));
    });
}

Tensor pad_cols(const Tensor& a, int total, int start) {
    require_rank2(a, "pad_cols");
    const int m = a.dim(0), len = a.dim(1);
    if (start < 0 || start + len > total) throw std::invalid_argument("pad_cols: range out of bounds");
    Tensor out = Tensor::zeros({m, total});
    const double* av = a.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        std::memcpy(ov + static_cast<std::size_t>(i) * total + start,
                    av + static_cast<std::size_t>(i) * len,
                    sizeof(double) * static_cast<std::size_t>(len));
    }
    return detail::finish_op({a}, out, [start, len](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, slice_cols(gy, start, len));
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const int n = parts[0].dim(1);
    int total = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.dim(1) != n) throw std::invalid_argument("concat_rows: column counts differ");
        total += p.dim(0);
    }
    Tensor out = Tensor::zeros({total, n});
    double* ov = out.mutable_values().data();
    std::vector<int> offsets(parts.size());
    int row = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        offsets[p] = row;
        std::memcpy(ov + static_cast<std::size_t>(row) * n, parts[p].values().data(),
                    sizeof(double) * parts[p].values().size());
        row += parts[p].dim(0);
    }
    std::vector<int> lens(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) lens[p] = parts[p].dim(0);
    return detail::finish_op(parts, out, [offsets, lens](const Tensor& gy, GradSink& sink) {
        for (std::size_t p = 0; p < offsets.size(); ++p) {
            if (sink.needs(static_cast<int>(p))) {
                sink.add(static_cast<int>(p), slice_rows(gy, offsets[p], lens[p]));
            }
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.dim(0) != b.dim(0)) throw std::invalid_argument("concat_cols: row counts differ");
    const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
    Tensor out = Tensor::zeros({m, p + q});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        std::memcpy(ov + static_cast<std::size_t>(i) * (p + q),
                    av + static_cast<std::size_t>(i) * p, sizeof(double) * static_cast<std::size_t>(p));
        std::memcpy(ov + static_cast<std::size_t>(i) * (p + q) + p,
                    bv + static_cast<std::size_t>(i) * q, sizeof(double) * static_cast<std::size_t>(q));
    }
    return detail::finish_op({a, b}, out, [p, q](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, slice_cols(gy, 0, p));
        if (sink.needs(1)) sink.add(1, slice_cols(gy, p, q));
    });
}

Tensor gather_cols(const Tensor& a, std::vector<int> idx) {
    require_rank2(a, "gather_cols");
    const int m = a.dim(0), n = a.dim(1);
    const int k = static_cast<int>(idx.size());
    for (int j : idx) {
        if (j < 0 || j >= n) throw std::invalid_argument("gather_cols: index out of range");
    }
    Tensor out = Tensor::zeros({m, k});
    const double* av = a.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
            ov[static_cast<std::size_t>(i) * k + j] =
                av[static_cast<std::size_t>(i) * n + idx[static_cast<std::size_t>(j)]];
        }
    }
    return detail::finish_op({a}, out, [idx, n](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, scatter_cols(gy, idx, n));
    });
}

Tensor scatter_cols(const Tensor& a, std::vector<int> idx, int total) {
    require_rank2(a, "scatter_cols");
    const int m = a.dim(0), k = a.dim(1);
    if (static_cast<int>(idx.size()) != k) {
        throw std::invalid_argument("scatter_cols: index count must equal column count");
    }
    for (int j : idx) {
        if (j < 0 || j >= total) throw std::invalid_argument("scatter_cols: index out of range");
    }
    Tensor out = Tensor::zeros({m, total});
    const double* av = a.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
            ov[static_cast<std::size_t>(i) * total + idx[static_cast<std::size_t>(j)]] +=
                av[static_cast<std::size_t>(i) * k + j];
        }
    }
    return detail::finish_op({a}, out, [idx](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, gather_cols(gy, idx));
    });
}

namespace {

Tensor log_softmax_rows(const Tensor& x) {
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (int i = 0; i < m; ++i) {
        const double* row = xv + static_cast<std::size_t>(i) * n;
        double* orow = ov + static_cast<std::size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += std::exp(row[j] - mx);
        const double lse = mx + std::log(acc);
        for (int j = 0; j < n; ++j) orow[j] = row[j] - lse;
    }
    return detail::finish_op({x}, out, [out, n](const Tensor& gy, GradSink& sink) {
        // dx = gy - softmax(x) * rowsum(gy)
        if (sink.needs(0)) {
            sink.add(0, sub(gy, mul(exp(out), broadcast_cols(sum_cols(gy), n))));
        }
    });
}

}  // namespace

Tensor log_softmax(const Tensor& x, int axis) {
    require_rank2(x, "log_softmax");
    if (axis == 1) return log_softmax_rows(x);
    if (axis == 0) return transpose(log_softmax_rows(transpose(x)));
    throw std::invalid_argument("log_softmax: axis must be 0 or 1");
}

Tensor im2col3(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("im2col3: expected NCHW tensor");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t L = static_cast<std::int64_t>(N) * H * W;
    Tensor out = Tensor::zeros({C * 9, static_cast<int>(L)});
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                double* orow = ov + (static_cast<std::size_t>(c) * 9 + ki * 3 + kj) * L;
                const int j0 = std::max(0, 1 - kj);
                const int j1 = std::min(W, W + 1 - kj);
                for (int n = 0; n < N; ++n) {
                    for (int i = 0; i < H; ++i) {
                        const int ii = i + ki - 1;
                        if (ii < 0 || ii >= H) continue;
                        const double* src =
                            xv + ((static_cast<std::size_t>(n) * C + c) * H + ii) * W + (j0 + kj - 1);
                        double* dst = orow + (static_cast<std::size_t>(n) * H + i) * W + j0;
                        if (j1 > j0) {
                            std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(j1 - j0));
                        }
                    }
                }
            }
        }
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, col2im3(gy, xs));
    });
}

Tensor col2im3(const Tensor& cols, Shape nchw) {
    require_rank2(cols, "col2im3");
    if (nchw.size() != 4) throw std::invalid_argument("col2im3: target must be NCHW");
    const int N = nchw[0], C = nchw[1], H = nchw[2], W = nchw[3];
    const std::int64_t L = static_cast<std::int64_t>(N) * H * W;
    if (cols.dim(0) != C * 9 || cols.dim(1) != L) {
        throw std::invalid_argument("col2im3: column matrix does not match target shape");
    }
    Tensor out = Tensor::zeros(nchw);
    const double* cv = cols.values().data();
    double* ov = out.mutable_values().data();
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                const double* crow = cv + (static_cast<std::size_t>(c) * 9 + ki * 3 + kj) * L;
                const int j0 = std::max(0, 1 - kj);
                const int j1 = std::min(W, W + 1 - kj);
                for (int n = 0; n < N; ++n) {
                    for (int i = 0; i < H; ++i) {
                        const int ii = i + ki - 1;
                        if (ii < 0 || ii >= H) continue;
                        double* dst =
                            ov + ((static_cast<std::size_t>(n) * C + c) * H + ii) * W + (j0 + kj - 1);
                        const double* src = crow + (static_cast<std::size_t>(n) * H + i) * W + j0;
                        for (int j = 0; j < j1 - j0; ++j) dst[j] += src[j];
                    }
                }
            }
        }
    }
    return detail::finish_op({cols}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, im2col3(gy));
    });
}

Tensor cmat_to_nchw(const Tensor& mat, Shape nchw) {
    require_rank2(mat, "cmat_to_nchw");
    if (nchw.size() != 4) throw std::invalid_argument("cmat_to_nchw: target must be NCHW");
    const int N = nchw[0], C = nchw[1], H = nchw[2], W = nchw[3];
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    if (mat.dim(0) != C || mat.dim(1) != static_cast<std::int64_t>(N * hw)) {
        throw std::invalid_argument("cmat_to_nchw: matrix does not match target shape");
    }
    Tensor out = Tensor::zeros(nchw);
    const double* mv = mat.values().data();
    double* ov = out.mutable_values().data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            std::memcpy(ov + (static_cast<std::size_t>(n) * C + c) * hw,
                        mv + static_cast<std::size_t>(c) * N * hw + static_cast<std::size_t>(n) * hw,
                        sizeof(double) * hw);
        }
    }
    return detail::finish_op({mat}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, nchw_to_cmat(gy));
    });
}

Tensor nchw_to_cmat(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("nchw_to_cmat: expected NCHW tensor");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out = Tensor::zeros({C, static_cast<int>(N * hw)});
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            std::memcpy(ov + static_cast<std::size_t>(c) * N * hw + static_cast<std::size_t>(n) * hw,
                        xv + (static_cast<std::size_t>(n) * C + c) * hw, sizeof(double) * hw);
        }
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, cmat_to_nchw(gy, xs));
    });
}

Tensor channel_sum(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("channel_sum: expected NCHW tensor");
    const int N = x.dim(0), C = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor out = Tensor::zeros({C});
    const double* xv = x.values().data();
    auto& ov = out.mutable_values();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* plane = xv + (static_cast<std::size_t>(n) * C + c) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
            ov[static_cast<std::size_t>(c)] += acc;
        }
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_channel(gy, xs));
    });
}

Tensor broadcast_channel(const Tensor& v, Shape nchw) {
    if (v.rank() != 1 || nchw.size() != 4 || v.dim(0) != nchw[1]) {
        throw std::invalid_argument("broadcast_channel: vector length must equal channel count");
    }
    const int N = nchw[0], C = nchw[1];
    const std::size_t hw = static_cast<std::size_t>(nchw[2]) * nchw[3];
    Tensor out = Tensor::zeros(nchw);
    auto& ov = out.mutable_values();
    const auto& vv = v.values();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            double* plane = ov.data() + (static_cast<std::size_t>(n) * C + c) * hw;
            const double val = vv[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < hw; ++i) plane[i] = val;
        }
    }
    return detail::finish_op({v}, out, [](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, channel_sum(gy));
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: expected rank-4 tensors");
    if (w.dim(2) != 3 || w.dim(3) != 3) throw std::invalid_argument("conv2d: kernel must be 3×3");
    if (w.dim(1) != x.dim(1)) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " do not match kernel channels " + std::to_string(w.dim(1)));
    }
    const int cout = w.dim(0);
    if (bias.rank() != 1 || bias.dim(0) != cout) {
        throw std::invalid_argument("conv2d: bias must have one entry per output channel");
    }
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor cols = im2col3(x);
    Tensor wmat = reshape(w, {cout, x.dim(1) * 9});
    Tensor ymat = add(matmul(wmat, cols), broadcast_cols(bias, N * H * W));
    return cmat_to_nchw(ymat, {N, cout, H, W});
}

Tensor conv2d_1x1(const Tensor& x, const Tensor& w) {
    if (x.rank() != 4 || w.rank() != 2) {
        throw std::invalid_argument("conv2d_1x1: expected NCHW input and rank-2 kernel");
    }
    if (w.dim(1) != x.dim(1)) throw std::invalid_argument("conv2d_1x1: channel mismatch");
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor ymat = matmul(w, nchw_to_cmat(x));
    return cmat_to_nchw(ymat, {N, w.dim(0), H, W});
}

namespace {

using PoolIdx = std::shared_ptr<std::vector<std::int64_t>>;

Tensor pool_gather(const Tensor& x, const PoolIdx& idx, Shape out_shape);

// Routes per-window gradients back to their recorded argmax positions.
Tensor pool_scatter(const Tensor& g, const PoolIdx& idx, Shape in_shape) {
    Tensor out = Tensor::zeros(in_shape);
    const auto& gv = g.values();
    auto& ov = out.mutable_values();
    for (std::size_t e = 0; e < gv.size(); ++e) {
        ov[static_cast<std::size_t>((*idx)[e])] += gv[e];
    }
    Shape gs = g.shape();
    return detail::finish_op({g}, out, [idx, gs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, pool_gather(gy, idx, gs));
    });
}

Tensor pool_gather(const Tensor& x, const PoolIdx& idx, Shape out_shape) {
    Tensor out = Tensor::zeros(out_shape);
    const auto& xv = x.values();
    auto& ov = out.mutable_values();
    for (std::size_t e = 0; e < ov.size(); ++e) {
        ov[e] = xv[static_cast<std::size_t>((*idx)[e])];
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [idx, xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, pool_scatter(gy, idx, xs));
    });
}

}  // namespace

Tensor maxpool2d(const Tensor& x, int pool_h, int pool_w) {
    if (x.rank() != 4) throw std::invalid_argument("maxpool2d: expected NCHW tensor");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (pool_h <= 0 || pool_w <= 0 || pool_h > H || pool_w > W) {
        throw std::invalid_argument("maxpool2d: pool size exceeds spatial dimension");
    }
    const int OH = H / pool_h, OW = W / pool_w;
    Tensor out = Tensor::zeros({N, C, OH, OW});
    auto idx = std::make_shared<std::vector<std::int64_t>>(out.values().size());
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    std::size_t e = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oi = 0; oi < OH; ++oi) {
                for (int oj = 0; oj < OW; ++oj, ++e) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t best_at = -1;
                    for (int pi = 0; pi < pool_h; ++pi) {
                        const std::size_t row = plane + static_cast<std::size_t>(oi * pool_h + pi) * W;
                        for (int pj = 0; pj < pool_w; ++pj) {
                            const std::size_t at = row + static_cast<std::size_t>(oj * pool_w + pj);
                            if (xv[at] > best) {
                                best = xv[at];
                                best_at = static_cast<std::int64_t>(at);
                            }
                        }
                    }
                    ov[e] = best;
                    (*idx)[e] = best_at;
                }
            }
        }
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [idx, xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, pool_scatter(gy, idx, xs));
    });
}

namespace {

Tensor time_scatter(const Tensor& g, int t, Shape nchw);

}

Tensor time_slice(const Tensor& x, int t) {
    if (x.rank() != 4) throw std::invalid_argument("time_slice: expected NCHW tensor");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (t < 0 || t >= W) throw std::invalid_argument("time_slice: step out of range");
    Tensor out = Tensor::zeros({N, C * H});
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int h = 0; h < H; ++h) {
                ov[static_cast<std::size_t>(n) * C * H + static_cast<std::size_t>(c) * H + h] =
                    xv[((static_cast<std::size_t>(n) * C + c) * H + h) * W + t];
            }
        }
    }
    Shape xs = x.shape();
    return detail::finish_op({x}, out, [t, xs](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, time_scatter(gy, t, xs));
    });
}

namespace {

Tensor time_scatter(const Tensor& g, int t, Shape nchw) {
    const int N = nchw[0], C = nchw[1], H = nchw[2], W = nchw[3];
    Tensor out = Tensor::zeros(nchw);
    const double* gv = g.values().data();
    double* ov = out.mutable_values().data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int h = 0; h < H; ++h) {
                ov[((static_cast<std::size_t>(n) * C + c) * H + h) * W + t] =
                    gv[static_cast<std::size_t>(n) * C * H + static_cast<std::size_t>(c) * H + h];
            }
        }
    }
    return detail::finish_op({g}, out, [t](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, time_slice(gy, t));
    });
}

}  // namespace

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank2(x, "dense");
    require_rank2(w, "dense");
    if (b.rank() != 1 || b.dim(0) != w.dim(1)) {
        throw std::invalid_argument("dense: bias must match output width");
    }
    return add(matmul(x, w), broadcast_rows(b, x.dim(0)));
}

Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels) {
    require_rank2(log_probs, "nll_loss");
    const int m = log_probs.dim(0), n = log_probs.dim(1);
    if (static_cast<int>(labels.size()) != m) {
        throw std::invalid_argument("nll_loss: one label per row required");
    }
    Tensor onehot = Tensor::zeros({m, n});
    auto& hv = onehot.mutable_values();
    for (int i = 0; i < m; ++i) {
        const int lab = labels[static_cast<std::size_t>(i)];
        if (lab < 0 || lab >= n) throw std::invalid_argument("nll_loss: label out of range");
        hv[static_cast<std::size_t>(i) * n + lab] = 1.0;
    }
    return scale(sum(mul(log_probs, onehot)), -1.0 / static_cast<double>(m));
}

}  // namespace geez
