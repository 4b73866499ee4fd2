#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "geez/metrics.hpp"
#include "geez/rng.hpp"
#include "geez/utf8.hpp"

using namespace geez;
using namespace geez::metrics;

namespace {

using Seq = std::vector<std::uint32_t>;

Seq seq(const std::string& s) { return utf8_decode(s); }

// Textbook recursion, no memoization: the independent oracle.
int lev_naive(const Seq& a, std::size_t i, const Seq& b, std::size_t j) {
    if (i == 0) return static_cast<int>(j);
    if (j == 0) return static_cast<int>(i);
    if (a[i - 1] == b[j - 1]) return lev_naive(a, i - 1, b, j - 1);
    const int s = lev_naive(a, i - 1, b, j - 1);
    const int d = lev_naive(a, i - 1, b, j);
    const int ins = lev_naive(a, i, b, j - 1);
    return 1 + std::min({s, d, ins});
}

int lev_naive(const std::string& a, const std::string& b) {
    Seq sa = seq(a), sb = seq(b);
    return lev_naive(sa, sa.size(), sb, sb.size());
}

Seq random_seq(Rng& rng, int max_len, int alphabet) {
    Seq s(static_cast<std::size_t>(rng.uniform_int(max_len + 1)));
    for (auto& c : s) c = static_cast<std::uint32_t>('a' + rng.uniform_int(alphabet));
    return s;
}

}  // namespace

TEST_CASE("levenshtein worked examples") {
    auto r = levenshtein(seq(""), seq("abc"));
    CHECK(r.distance == 3);
    CHECK(r.breakdown.substitutions == 0);
    CHECK(r.breakdown.deletions == 0);
    CHECK(r.breakdown.insertions == 3);
    CHECK(r.breakdown.ref_length == 0);

    CHECK(levenshtein(seq("abc"), seq("abc")).distance == 0);
    CHECK(levenshtein(seq("kitten"), seq("sitting")).distance == 3);
    CHECK(lev_naive("kitten", "sitting") == 3);
}

TEST_CASE("cer worked examples") {
    CHECK(cer("abc", "abc") == doctest::Approx(0.0));
    CHECK(cer("abc", "axc") == doctest::Approx(1.0 / 3.0));
    CHECK(cer("ab", "abcd") == doctest::Approx(1.0));
    CHECK_THROWS_AS(cer("", "abc"), std::invalid_argument);
}

TEST_CASE("ned worked examples") {
    CHECK(ned("abc", "ab") == doctest::Approx(1.0 / 3.0));
    CHECK(ned("xyz", "xyz") == doctest::Approx(0.0));
    CHECK(ned("aaa", "bbb") == doctest::Approx(1.0));
    CHECK(ned("", "") == doctest::Approx(0.0));
}

TEST_CASE("unicode strings compare per code point") {
    // Two three-byte Ethiopic characters, one substitution.
    const std::string a = "ሀሁ";
    const std::string b = "ሀሂ";
    CHECK(cer(a, b) == doctest::Approx(0.5));
    CHECK(ned(a, b) == doctest::Approx(0.5));
}

TEST_CASE("word accuracy counts exact matches") {
    std::vector<std::pair<std::string, std::string>> all = {{"a", "a"}, {"b", "b"}};
    CHECK(word_accuracy(all) == doctest::Approx(1.0));

    std::vector<std::pair<std::string, std::string>> none = {{"a", "x"}, {"b", "y"}};
    CHECK(word_accuracy(none) == doctest::Approx(0.0));

    std::vector<std::pair<std::string, std::string>> five_of_eight;
    for (int i = 0; i < 5; ++i) five_of_eight.push_back({"w", "w"});
    for (int i = 0; i < 3; ++i) five_of_eight.push_back({"w", "v"});
    CHECK(word_accuracy(five_of_eight) == doctest::Approx(0.625));

    CHECK_THROWS_AS(word_accuracy({}), std::invalid_argument);
}

TEST_CASE("confusion matrix") {
    SUBCASE("perfect predictions are diagonal") {
        std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 1}, {2, 2}, {1, 1}};
        auto m = confusion_matrix(pairs, 3);
        CHECK(m[0][0] == 1);
        CHECK(m[1][1] == 2);
        CHECK(m[2][2] == 1);
        std::int64_t off = 0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                if (i != j) off += m[i][j];
            }
        }
        CHECK(off == 0);
    }
    SUBCASE("single pair fills exactly one cell") {
        auto m = confusion_matrix({{2, 5}}, 6);
        std::int64_t total = 0;
        for (const auto& row : m) {
            for (auto v : row) total += v;
        }
        CHECK(total == 1);
        CHECK(m[2][5] == 1);
    }
    SUBCASE("row sums equal per-class truth counts") {
        Rng rng(3);
        std::vector<std::pair<int, int>> pairs;
        std::vector<std::int64_t> truth(4, 0);
        for (int i = 0; i < 200; ++i) {
            const int t = rng.uniform_int(4), p = rng.uniform_int(4);
            pairs.push_back({t, p});
            ++truth[static_cast<std::size_t>(t)];
        }
        auto m = confusion_matrix(pairs, 4);
        for (int t = 0; t < 4; ++t) {
            std::int64_t s = 0;
            for (auto v : m[static_cast<std::size_t>(t)]) s += v;
            CHECK(s == truth[static_cast<std::size_t>(t)]);
        }
    }
    SUBCASE("out-of-range index rejected") {
        CHECK_THROWS_AS(confusion_matrix({{0, 7}}, 3), std::invalid_argument);
    }
}

TEST_CASE("levenshtein is a metric and breakdown sums to distance") {
    Rng rng(77);
    for (int trial = 0; trial < 400; ++trial) {
        Seq a = random_seq(rng, 6, 3);
        Seq b = random_seq(rng, 6, 3);
        Seq c = random_seq(rng, 6, 3);
        const auto rab = levenshtein(a, b);
        const auto rba = levenshtein(b, a);
        const auto rac = levenshtein(a, c);
        const auto rcb = levenshtein(c, b);
        CHECK(rab.distance == rba.distance);                      // symmetry
        CHECK(rab.distance <= rac.distance + rcb.distance);       // triangle
        CHECK((rab.distance == 0) == (a == b));                   // identity
        CHECK(rab.breakdown.total() == rab.distance);             // backtrace consistency
    }
}

TEST_CASE("DP equals naive recursion on short random pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Seq a = random_seq(rng, 5, 3);
        Seq b = random_seq(rng, 5, 3);
        CHECK(levenshtein(a, b).distance == lev_naive(a, a.size(), b, b.size()));
    }
}

TEST_CASE("cer equals ned scaled by length ratio") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        Seq ga = random_seq(rng, 6, 3);
        if (ga.empty()) ga.push_back('a');
        Seq pa = random_seq(rng, 6, 3);
        const std::string g = utf8_encode(ga), p = utf8_encode(pa);
        const double lhs = cer(g, p);
        const double rhs =
            ned(g, p) * static_cast<double>(std::max(ga.size(), pa.size())) /
            static_cast<double>(ga.size());
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(ned(g, p) <= 1.0);
        CHECK(ned(g, p) >= 0.0);
    }
}

TEST_CASE("metrics report serializes to the documented JSON shape") {
    MetricsReport rep;
    rep.cer = 0.25;
    rep.ned = 0.125;
    rep.word_accuracy = 0.75;
    rep.skipped = 1;
    rep.confusion = {{2, 0}, {1, 3}};
    CHECK(rep.to_json() ==
          R"({"cer":0.25,"ned":0.125,"word_accuracy":0.75,"skipped":1,"confusion":[[2,0],[1,3]]})");
}
