#pragma once

// Central finite differences: the independent gradient oracle shared by the
// test suites. Kept free of any dependency on the tape-based backward path it
// is used to check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "geez/tensor.hpp"

namespace testutil {

// Gradient of f w.r.t. every element of x, where f re-evaluates the whole
// computation using x's current storage.
inline std::vector<double> numeric_grad(const std::function<double()>& f, geez::Tensor x,
                                        double h = 1e-5) {
    std::vector<double> g(x.values().size());
    auto& v = x.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double fp = f();
        v[i] = keep - h;
        const double fm = f();
        v[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Largest violation of |a-n| <= rtol*max(|a|,|n|) + atol, reported as the
// ratio violation/(rtol*scale+atol); <= 1 means the check passes.
inline double grad_mismatch(const std::vector<double>& analytic, const std::vector<double>& numeric,
                            double rtol, double atol = 1e-9) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
        const double bound = rtol * scale + atol;
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / bound);
    }
    return worst;
}

inline bool grads_match(const std::vector<double>& analytic, const std::vector<double>& numeric,
                        double rtol, double atol = 1e-9) {
    return analytic.size() == numeric.size() && grad_mismatch(analytic, numeric, rtol, atol) <= 1.0;
}

}  // namespace testutil
