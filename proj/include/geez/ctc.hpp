#pragma once

#include <vector>

#include "geez/tensor.hpp"

namespace geez::ctc {

// Frame log-probabilities are rank-3 tensors shaped {T, N, C+1}: T frames,
// batch N, charset size C, with class index C (last) reserved for the blank.

// Minimum frame count that can emit a label: its length plus one separating
// blank per adjacent repeated symbol.
int min_frames(const std::vector<int>& label);

// Merge consecutive repeats, then drop blanks.
std::vector<int> collapse_path(const std::vector<int>& path, int blank);

struct CtcLossResult {
    Tensor loss;                    // scalar, mean over feasible items
    std::vector<double> item_loss;  // -log p(label) per item; NaN when skipped
    std::vector<bool> feasible;
    int skipped = 0;
};

// Exact negative log-likelihood via log-space forward/backward recursions
// over the blank-interleaved extended label. The gradient w.r.t. the
// log-probabilities is assembled from the alpha·beta posteriors. Items whose
// label cannot fit in T frames are skipped with a warning and excluded from
// the mean; a batch with no feasible item is an error.
CtcLossResult ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& labels);

// Same value, but the recursions are built from recorded tensor ops, so the
// loss is differentiable to any order (used by second-order meta-training).
CtcLossResult ctc_loss_graph(const Tensor& log_probs, const std::vector<std::vector<int>>& labels);

// Enumerates every length-T path of one batch item and log-sum-exps those
// collapsing to the label. Guarded to (C+1)^T <= 10^6 paths. Returns the
// log-probability (not its negation).
double brute_force_ctc(const Tensor& log_probs, int item, const std::vector<int>& label);

// Per-frame argmax (ties to the lowest index), collapsed.
std::vector<std::vector<int>> greedy_decode(const Tensor& log_probs);

// Prefix beam search merging blank/non-blank mass per prefix; returns the
// highest-probability prefix found for each item.
std::vector<std::vector<int>> beam_decode(const Tensor& log_probs, int beam_width);

}  // namespace geez::ctc
