#pragma once

#include <vector>

#include "geez/tensor.hpp"

namespace geez {

// Elementwise, same shape. Backward rules are compositions of these same ops,
// so gradients can themselves be recorded and differentiated (see Tape::grad).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
// Elementwise log(e^a + e^b); values at or below the log-space floor
// (-1e30) are treated as zero probability.
Tensor logaddexp(const Tensor& a, const Tensor& b);

constexpr double kLogZero = -1e30;

// Reductions and broadcasts.
Tensor sum(const Tensor& x);                           // -> shape {1}
Tensor mean(const Tensor& x);
Tensor sum_rows(const Tensor& x);                      // m×n -> {n}
Tensor sum_cols(const Tensor& x);                      // m×n -> {m}
Tensor broadcast_rows(const Tensor& v, int m);         // {n} -> m×n, rows repeat v
Tensor broadcast_cols(const Tensor& v, int n);         // {m} -> m×n, cols repeat v
Tensor broadcast_scalar(const Tensor& s, Shape shape);

// Linear algebra and layout (rank-2 unless noted).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aᵀ·b, a stored (k×m)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a·bᵀ, b stored (n×k)
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& x, Shape s);
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor pad_rows(const Tensor& a, int total, int start);
Tensor slice_cols(const Tensor& a, int start, int len);
Tensor pad_cols(const Tensor& a, int total, int start);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_cols(const Tensor& a, std::vector<int> idx);
Tensor scatter_cols(const Tensor& a, std::vector<int> idx, int total);  // adds duplicates

// Numerically stable (max-subtracted) log-softmax.
// axis selects the normalization direction of a rank-2 tensor: 1 = within
// each row, 0 = within each column.
Tensor log_softmax(const Tensor& x, int axis = 1);

// Image ops, NCHW layout.
//
// 3×3 same-padding convolution is expressed as im2col + matmul: im2col lays
// every 3×3 input patch out as a column of a (C·9) × (N·H·W) matrix, and
// cmat_to_nchw permutes the C_out × (N·H·W) product back to NCHW.
Tensor im2col3(const Tensor& x);
Tensor col2im3(const Tensor& cols, Shape nchw);
Tensor cmat_to_nchw(const Tensor& mat, Shape nchw);
Tensor nchw_to_cmat(const Tensor& x);

// Per-channel reduction/expansion over NCHW (batch, height, width collapsed).
Tensor channel_sum(const Tensor& x);                     // -> {C}
Tensor broadcast_channel(const Tensor& v, Shape nchw);   // {C} -> NCHW

// Cross-correlation with 3×3 kernels, zero padding 1, stride 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
// 1×1 convolution without bias (residual projection).
Tensor conv2d_1x1(const Tensor& x, const Tensor& w);

// Window maximum with stride equal to the window; trailing remainder rows and
// columns are truncated. Gradient routes to the first maximum in row-major
// window order.
Tensor maxpool2d(const Tensor& x, int pool_h, int pool_w);

// Column t of an NCHW feature map as one sequence step: N × (C·H), feature
// index c·H + h.
Tensor time_slice(const Tensor& x, int t);

// x·w + b with b broadcast across rows.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

// Mean negative log-likelihood of per-row labels under rank-2 log-probs.
Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels);

}  // namespace geez
