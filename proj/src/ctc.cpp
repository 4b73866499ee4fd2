#include "geez/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "geez/ops.hpp"

namespace geez::ctc {

namespace {

// Clamped log-space addition; anything at or below kLogZero is zero mass.
double lse2(double a, double b) {
    double hi = a, lo = b;
    if (hi < lo) std::swap(hi, lo);
    if (hi <= kLogZero) return kLogZero;
    return hi + std::log1p(std::exp(lo - hi));
}

std::vector<int> extended_label(const std::vector<int>& label, int blank) {
    std::vector<int> ext(2 * label.size() + 1, blank);
    for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
    return ext;
}

void validate_inputs(const Tensor& log_probs, const std::vector<std::vector<int>>& labels) {
    if (log_probs.rank() != 3) {
        throw std::invalid_argument("ctc: log_probs must be rank-3 {T, N, C+1}");
    }
    const int N = log_probs.dim(1);
    const int C1 = log_probs.dim(2);
    if (C1 < 2) throw std::invalid_argument("ctc: need at least one symbol plus blank");
    if (static_cast<int>(labels.size()) != N) {
        throw std::invalid_argument("ctc: one label per batch item required");
    }
    for (const auto& label : labels) {
        for (int s : label) {
            if (s < 0 || s >= C1 - 1) {
                throw std::invalid_argument("ctc: label symbol " + std::to_string(s) +
                                            " outside charset (blank may not appear in labels)");
            }
        }
    }
}

// Alpha/beta recursions for one item; returns -log p(label) and, when grad is
// non-null, adds d(-log p)/d log_probs into the item's {T, C1} slice of the
// full-batch gradient buffer (stride N·C1 between frames).
double item_forward_backward(const double* lp, int T, int N, int C1, int item,
                             const std::vector<int>& ext, double* grad) {
    const int S = static_cast<int>(ext.size());
    auto emit = [&](int t, int cls) {
        return lp[(static_cast<std::size_t>(t) * N + item) * C1 + cls];
    };

    std::vector<double> alpha(static_cast<std::size_t>(T) * S, kLogZero);
    alpha[0] = emit(0, ext[0]);
    if (S > 1) alpha[1] = emit(0, ext[1]);
    for (int t = 1; t < T; ++t) {
        const double* prev = alpha.data() + static_cast<std::size_t>(t - 1) * S;
        double* cur = alpha.data() + static_cast<std::size_t>(t) * S;
        for (int s = 0; s < S; ++s) {
            double acc = prev[s];
            if (s >= 1) acc = lse2(acc, prev[s - 1]);
            if (s >= 2 && ext[s] != C1 - 1 && ext[s] != ext[s - 2]) acc = lse2(acc, prev[s - 2]);
            cur[s] = acc <= kLogZero ? kLogZero : acc + emit(t, ext[s]);
        }
    }
    const double* last = alpha.data() + static_cast<std::size_t>(T - 1) * S;
    const double log_z = lse2(last[S - 1], S >= 2 ? last[S - 2] : kLogZero);
    if (log_z <= kLogZero) return -kLogZero;  // unreachable label; caller filters by min_frames

    if (grad != nullptr) {
        std::vector<double> beta(static_cast<std::size_t>(T) * S, kLogZero);
        double* bl = beta.data() + static_cast<std::size_t>(T - 1) * S;
        bl[S - 1] = emit(T - 1, ext[S - 1]);
        if (S >= 2) bl[S - 2] = emit(T - 1, ext[S - 2]);
        for (int t = T - 2; t >= 0; --t) {
            const double* nxt = beta.data() + static_cast<std::size_t>(t + 1) * S;
            double* cur = beta.data() + static_cast<std::size_t>(t) * S;
            for (int s = 0; s < S; ++s) {
                double acc = nxt[s];
                if (s + 1 < S) acc = lse2(acc, nxt[s + 1]);
                if (s + 2 < S && ext[s + 2] != C1 - 1 && ext[s + 2] != ext[s]) {
                    acc = lse2(acc, nxt[s + 2]);
                }
                cur[s] = acc <= kLogZero ? kLogZero : acc + emit(t, ext[s]);
            }
        }
        // Posterior mass per (t, s); alpha and beta both include the frame-t
        // emission, so it is subtracted once.
        for (int t = 0; t < T; ++t) {
            const double* at = alpha.data() + static_cast<std::size_t>(t) * S;
            const double* bt = beta.data() + static_cast<std::size_t>(t) * S;
            double* grow = grad + (static_cast<std::size_t>(t) * N + item) * C1;
            for (int s = 0; s < S; ++s) {
                const double logpost = at[s] + bt[s] - emit(t, ext[s]) - log_z;
                grow[ext[s]] -= std::exp(logpost);
            }
        }
    }
    return -log_z;
}

}  // namespace

int min_frames(const std::vector<int>& label) {
    int repeats = 0;
    for (std::size_t i = 1; i < label.size(); ++i) {
        if (label[i] == label[i - 1]) ++repeats;
    }
    return static_cast<int>(label.size()) + repeats;
}

std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
    std::vector<int> out;
    int prev = -1;
    for (int c : path) {
        if (c != prev && c != blank) out.push_back(c);
        prev = c;
    }
    return out;
}

CtcLossResult ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& labels) {
    validate_inputs(log_probs, labels);
    const int T = log_probs.dim(0), N = log_probs.dim(1), C1 = log_probs.dim(2);
    const int blank = C1 - 1;

    CtcLossResult res;
    res.item_loss.assign(labels.size(), std::numeric_limits<double>::quiet_NaN());
    res.feasible.assign(labels.size(), false);

    std::vector<double> grad(log_probs.values().size(), 0.0);
    const double* lp = log_probs.values().data();
    double total = 0.0;
    int feasible = 0;
    for (int n = 0; n < N; ++n) {
        if (min_frames(labels[static_cast<std::size_t>(n)]) > T) {
            ++res.skipped;
            continue;
        }
        const auto ext = extended_label(labels[static_cast<std::size_t>(n)], blank);
        const double item = item_forward_backward(lp, T, N, C1, n, ext, grad.data());
        res.item_loss[static_cast<std::size_t>(n)] = item;
        res.feasible[static_cast<std::size_t>(n)] = true;
        total += item;
        ++feasible;
    }
    if (res.skipped > 0) {
        std::fprintf(stderr, "ctc: skipped %d infeasible label(s) (longer than %d frames allow)\n",
                     res.skipped, T);
    }
    if (feasible == 0) {
        throw std::runtime_error("ctc: every label in the batch is infeasible for " +
                                 std::to_string(T) + " frames");
    }

    const double inv = 1.0 / static_cast<double>(feasible);
    for (double& g : grad) g *= inv;
    Tensor grad_const = Tensor::from_values(log_probs.shape(), std::move(grad));
    Tensor loss = Tensor::scalar(total * inv);
    res.loss = detail::finish_op({log_probs}, loss, [grad_const](const Tensor& gy, GradSink& sink) {
        if (sink.needs(0)) {
            sink.add(0, mul(broadcast_scalar(gy, grad_const.shape()), grad_const));
        }
    });
    return res;
}

CtcLossResult ctc_loss_graph(const Tensor& log_probs, const std::vector<std::vector<int>>& labels) {
    validate_inputs(log_probs, labels);
    const int T = log_probs.dim(0), N = log_probs.dim(1), C1 = log_probs.dim(2);
    const int blank = C1 - 1;

    CtcLossResult res;
    res.item_loss.assign(labels.size(), std::numeric_limits<double>::quiet_NaN());
    res.feasible.assign(labels.size(), false);

    Tensor lp2 = reshape(log_probs, {T * N, C1});
    Tensor total;
    int feasible = 0;
    for (int n = 0; n < N; ++n) {
        const auto& label = labels[static_cast<std::size_t>(n)];
        if (min_frames(label) > T) {
            ++res.skipped;
            continue;
        }
        const auto ext = extended_label(label, blank);
        const int S = static_cast<int>(ext.size());

        Tensor init_mask = Tensor::zeros({1, S});
        for (int s = 2; s < S; ++s) init_mask.mutable_values()[static_cast<std::size_t>(s)] = kLogZero;
        Tensor shift1_mask, shift2_mask;
        if (S >= 2) {
            shift1_mask = Tensor::zeros({1, S});
            shift1_mask.mutable_values()[0] = kLogZero;
        }
        if (S >= 3) {
            shift2_mask = Tensor::zeros({1, S});
            for (int s = 0; s < S; ++s) {
                const bool allowed = s >= 2 && ext[static_cast<std::size_t>(s)] != blank &&
                                     ext[static_cast<std::size_t>(s)] !=
                                         ext[static_cast<std::size_t>(s - 2)];
                if (!allowed) shift2_mask.mutable_values()[static_cast<std::size_t>(s)] = kLogZero;
            }
        }

        std::vector<int> ext_idx(ext.begin(), ext.end());
        Tensor alpha;
        for (int t = 0; t < T; ++t) {
            Tensor em = gather_cols(slice_rows(lp2, t * N + n, 1), ext_idx);
            if (t == 0) {
                alpha = add(em, init_mask);
                continue;
            }
            Tensor trans = alpha;
            if (S >= 2) {
                Tensor sh1 = add(pad_cols(slice_cols(alpha, 0, S - 1), S, 1), shift1_mask);
                trans = logaddexp(trans, sh1);
            }
            if (S >= 3) {
                Tensor sh2 = add(pad_cols(slice_cols(alpha, 0, S - 2), S, 2), shift2_mask);
                trans = logaddexp(trans, sh2);
            }
            alpha = add(em, trans);
        }
        Tensor tail = slice_cols(alpha, S - 1, 1);
        Tensor log_z = S >= 2 ? logaddexp(tail, slice_cols(alpha, S - 2, 1)) : tail;
        Tensor item = neg(reshape(log_z, {1}));
        res.item_loss[static_cast<std::size_t>(n)] = item.item();
        res.feasible[static_cast<std::size_t>(n)] = true;
        total = feasible == 0 ? item : add(total, item);
        ++feasible;
    }
    if (res.skipped > 0) {
        std::fprintf(stderr, "ctc: skipped %d infeasible label(s) (longer than %d frames allow)\n",
                     res.skipped, T);
    }
    if (feasible == 0) {
        throw std::runtime_error("ctc: every label in the batch is infeasible for " +
                                 std::to_string(T) + " frames");
    }
    res.loss = scale(total, 1.0 / static_cast<double>(feasible));
    return res;
}

double brute_force_ctc(const Tensor& log_probs, int item, const std::vector<int>& label) {
    if (log_probs.rank() != 3) throw std::invalid_argument("brute_force_ctc: rank-3 input required");
    const int T = log_probs.dim(0), N = log_probs.dim(1), C1 = log_probs.dim(2);
    if (item < 0 || item >= N) throw std::invalid_argument("brute_force_ctc: item out of range");
    double paths = 1.0;
    for (int t = 0; t < T; ++t) {
        paths *= C1;
        if (paths > 1e6) throw std::invalid_argument("brute_force_ctc: path count exceeds 10^6");
    }

    const double* lp = log_probs.values().data();
    auto emit = [&](int t, int cls) {
        return lp[(static_cast<std::size_t>(t) * N + item) * C1 + cls];
    };
    std::vector<int> path(static_cast<std::size_t>(T), 0);
    double acc = kLogZero;
    while (true) {
        double lpath = 0.0;
        for (int t = 0; t < T; ++t) lpath += emit(t, path[static_cast<std::size_t>(t)]);
        if (collapse_path(path, C1 - 1) == label) acc = lse2(acc, lpath);

        int pos = T - 1;
        while (pos >= 0 && path[static_cast<std::size_t>(pos)] == C1 - 1) {
            path[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
        ++path[static_cast<std::size_t>(pos)];
    }
    return acc;
}

std::vector<std::vector<int>> greedy_decode(const Tensor& log_probs) {
    if (log_probs.rank() != 3) throw std::invalid_argument("greedy_decode: rank-3 input required");
    const int T = log_probs.dim(0), N = log_probs.dim(1), C1 = log_probs.dim(2);
    const double* lp = log_probs.values().data();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        std::vector<int> path(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const double* row = lp + (static_cast<std::size_t>(t) * N + n) * C1;
            int best = 0;
            for (int c = 1; c < C1; ++c) {
                if (row[c] > row[best]) best = c;
            }
            path[static_cast<std::size_t>(t)] = best;
        }
        out[static_cast<std::size_t>(n)] = collapse_path(path, C1 - 1);
    }
    return out;
}

std::vector<std::vector<int>> beam_decode(const Tensor& log_probs, int beam_width) {
    if (log_probs.rank() != 3) throw std::invalid_argument("beam_decode: rank-3 input required");
    if (beam_width < 1) throw std::invalid_argument("beam_decode: beam width must be >= 1");
    const int T = log_probs.dim(0), N = log_probs.dim(1), C1 = log_probs.dim(2);
    const int blank = C1 - 1;
    const double* lp = log_probs.values().data();

    using Prefix = std::vector<int>;
    // (log p ending in blank, log p ending in the last symbol); std::map keeps
    // prefix order lexicographic so pruning ties are deterministic.
    using BeamSet = std::map<Prefix, std::pair<double, double>>;

    std::vector<std::vector<int>> out(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        BeamSet beams;
        beams[{}] = {0.0, kLogZero};
        for (int t = 0; t < T; ++t) {
            const double* row = lp + (static_cast<std::size_t>(t) * N + n) * C1;
            BeamSet next;
            auto slot = [&next](const Prefix& p) -> std::pair<double, double>& {
                auto it = next.find(p);
                if (it == next.end()) it = next.emplace(p, std::make_pair(kLogZero, kLogZero)).first;
                return it->second;
            };
            for (const auto& [prefix, mass] : beams) {
                const auto [pb, pnb] = mass;
                const double ptot = lse2(pb, pnb);
                auto& stay = slot(prefix);
                stay.first = lse2(stay.first, ptot + row[blank]);
                for (int c = 0; c < blank; ++c) {
                    const double pc = row[c];
                    if (!prefix.empty() && prefix.back() == c) {
                        // repeat without separating blank collapses in place
                        stay.second = lse2(stay.second, pnb + pc);
                        Prefix extended = prefix;
                        extended.push_back(c);
                        auto& ext = slot(extended);
                        ext.second = lse2(ext.second, pb + pc);
                    } else {
                        Prefix extended = prefix;
                        extended.push_back(c);
                        auto& ext = slot(extended);
                        ext.second = lse2(ext.second, ptot + pc);
                    }
                }
            }
            if (static_cast<int>(next.size()) > beam_width) {
                std::vector<std::pair<double, const Prefix*>> ranked;
                ranked.reserve(next.size());
                for (const auto& [prefix, mass] : next) {
                    ranked.emplace_back(lse2(mass.first, mass.second), &prefix);
                }
                std::stable_sort(ranked.begin(), ranked.end(),
                                 [](const auto& a, const auto& b) { return a.first > b.first; });
                BeamSet pruned;
                for (int i = 0; i < beam_width; ++i) {
                    pruned.emplace(*ranked[static_cast<std::size_t>(i)].second,
                                   next.at(*ranked[static_cast<std::size_t>(i)].second));
                }
                next = std::move(pruned);
            }
            beams = std::move(next);
        }
        double best = -std::numeric_limits<double>::infinity();
        const Prefix* best_prefix = nullptr;
        for (const auto& [prefix, mass] : beams) {
            const double tot = lse2(mass.first, mass.second);
            if (tot > best) {
                best = tot;
                best_prefix = &prefix;
            }
        }
        out[static_cast<std::size_t>(n)] = best_prefix ? *best_prefix : Prefix{};
    }
    return out;
}

}  // namespace geez::ctc
