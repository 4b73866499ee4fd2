#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace geez::metrics {

// Edit operation counts from the backtrace of a unit-cost Levenshtein DP,
// oriented as (ground truth, prediction): deletions are ground-truth symbols
// the prediction missed, insertions are extra predicted symbols.
struct EditBreakdown {
    int substitutions = 0;
    int deletions = 0;
    int insertions = 0;
    int ref_length = 0;

    int total() const { return substitutions + deletions + insertions; }
};

struct LevResult {
    int distance = 0;
    EditBreakdown breakdown;
};

// Unit-cost DP over (|gt|+1)×(|pred|+1); the backtrace resolves ties
// preferring substitution over deletion over insertion.
LevResult levenshtein(const std::vector<std::uint32_t>& ground_truth,
                      const std::vector<std::uint32_t>& prediction);

// (S+D+I)/N with N the ground-truth length; may exceed 1. Throws on empty
// ground truth.
double cer(const std::string& ground_truth, const std::string& prediction);

// EditDistance / max(len(prediction), len(ground_truth)), in [0,1]. Both
// strings empty returns 0 by convention.
double ned(const std::string& ground_truth, const std::string& prediction);

// Exact-match fraction over (ground truth, prediction) pairs.
double word_accuracy(const std::vector<std::pair<std::string, std::string>>& pairs);

// counts[true_class][predicted_class]; indices must be < num_classes.
std::vector<std::vector<std::int64_t>> confusion_matrix(
    const std::vector<std::pair<int, int>>& pairs, int num_classes);

struct MetricsReport {
    double cer = 0.0;
    double ned = 0.0;
    double word_accuracy = 0.0;
    int skipped = 0;
    std::vector<std::vector<std::int64_t>> confusion;

    std::string to_json() const;
};

}  // namespace geez::metrics
