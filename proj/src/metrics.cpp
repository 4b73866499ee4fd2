#include "geez/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "geez/utf8.hpp"

namespace geez::metrics {

LevResult levenshtein(const std::vector<std::uint32_t>& ground_truth,
                      const std::vector<std::uint32_t>& prediction) {
    const std::size_t la = ground_truth.size();
    const std::size_t lb = prediction.size();
    std::vector<int> d((la + 1) * (lb + 1));
    auto cell = [&](std::size_t i, std::size_t j) -> int& { return d[i * (lb + 1) + j]; };

    for (std::size_t i = 0; i <= la; ++i) cell(i, 0) = static_cast<int>(i);
    for (std::size_t j = 0; j <= lb; ++j) cell(0, j) = static_cast<int>(j);
    for (std::size_t i = 1; i <= la; ++i) {
        for (std::size_t j = 1; j <= lb; ++j) {
            const int match = cell(i - 1, j - 1) + (ground_truth[i - 1] == prediction[j - 1] ? 0 : 1);
            cell(i, j) = std::min({match, cell(i - 1, j) + 1, cell(i, j - 1) + 1});
        }
    }

    LevResult out;
    out.distance = cell(la, lb);
    out.breakdown.ref_length = static_cast<int>(la);

    // Backtrace, tie preference substitution > deletion > insertion.
    std::size_t i = la, j = lb;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && ground_truth[i - 1] == prediction[j - 1] &&
            cell(i, j) == cell(i - 1, j - 1)) {
            --i;
            --j;
        } else if (i > 0 && j > 0 && cell(i, j) == cell(i - 1, j - 1) + 1) {
            ++out.breakdown.substitutions;
            --i;
            --j;
        } else if (i > 0 && cell(i, j) == cell(i - 1, j) + 1) {
            ++out.breakdown.deletions;
            --i;
        } else {
            ++out.breakdown.insertions;
            --j;
        }
    }
    return out;
}

double cer(const std::string& ground_truth, const std::string& prediction) {
    const auto gt = utf8_decode(ground_truth);
    if (gt.empty()) throw std::invalid_argument("cer: ground truth must be non-empty");
    const auto pred = utf8_decode(prediction);
    const LevResult r = levenshtein(gt, pred);
    return static_cast<double>(r.breakdown.total()) / static_cast<double>(gt.size());
}

double ned(const std::string& ground_truth, const std::string& prediction) {
    const auto gt = utf8_decode(ground_truth);
    const auto pred = utf8_decode(prediction);
    const std::size_t denom = std::max(gt.size(), pred.size());
    if (denom == 0) return 0.0;
    return static_cast<double>(levenshtein(gt, pred).distance) / static_cast<double>(denom);
}

double word_accuracy(const std::vector<std::pair<std::string, std::string>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("word_accuracy: empty pair list");
    std::size_t hits = 0;
    for (const auto& [gt, pred] : pairs) {
        if (gt == pred) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::vector<std::vector<std::int64_t>> confusion_matrix(
    const std::vector<std::pair<int, int>>& pairs, int num_classes) {
    std::vector<std::vector<std::int64_t>> counts(
        static_cast<std::size_t>(num_classes),
        std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
    for (const auto& [t, p] : pairs) {
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw std::invalid_argument("confusion_matrix: class index out of range");
        }
        ++counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return counts;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["cer"] = cer;
    j["ned"] = ned;
    j["word_accuracy"] = word_accuracy;
    j["skipped"] = skipped;
    j["confusion"] = confusion;
    return j.dump();
}

}  // namespace geez::metrics
