#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "htru/common.hpp"
#include "htru/metrics.hpp"

using namespace htru;

namespace {

// Memoless recursive oracle: explores every edit script.
int brute_force_distance(const std::string& a, const std::string& b, size_t i,
                         size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  const int sub = brute_force_distance(a, b, i + 1, j + 1) +
                  (a[i] == b[j] ? 0 : 1);
  const int del = brute_force_distance(a, b, i + 1, j) + 1;
  const int ins = brute_force_distance(a, b, i, j + 1) + 1;
  return std::min({sub, del, ins});
}

std::string random_string(std::mt19937_64& rng, int max_len) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> ch(0, 25);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + ch(rng)));
  return s;
}

}  // namespace

TEST_CASE("identity pair has zero ops") {
  const EditOps ops = edit_distance(std::string("phone"), std::string("phone"));
  CHECK(ops.substitutions == 0);
  CHECK(ops.insertions == 0);
  CHECK(ops.deletions == 0);
}

TEST_CASE("kitten/sitting totals three") {
  CHECK(edit_distance(std::string("kitten"), std::string("sitting")).total() == 3);
  CHECK(brute_force_distance("kitten", "sitting", 0, 0) == 3);
}

TEST_CASE("hand/hund is one substitution") {
  const EditOps ops = edit_distance(std::string("hand"), std::string("hund"));
  CHECK(ops.substitutions == 1);
  CHECK(ops.insertions == 0);
  CHECK(ops.deletions == 0);
}

TEST_CASE("diagonal-preferring backtrace maximizes substitutions") {
  // "ab" -> "cd": two substitutions, never ins+del pairs.
  const EditOps ops = edit_distance(std::string("ab"), std::string("cd"));
  CHECK(ops.substitutions == 2);
  CHECK(ops.insertions + ops.deletions == 0);
}

TEST_CASE("dp agrees with the exhaustive oracle on random pairs") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const std::string a = random_string(rng, 6);
    const std::string b = random_string(rng, 6);
    CHECK(edit_distance(a, b).total() == brute_force_distance(a, b, 0, 0));
  }
}

TEST_CASE("total cost is symmetric and respects the triangle inequality") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const std::string a = random_string(rng, 8);
    const std::string b = random_string(rng, 8);
    const std::string c = random_string(rng, 8);
    const int ab = edit_distance(a, b).total();
    const int ba = edit_distance(b, a).total();
    const int bc = edit_distance(b, c).total();
    const int ac = edit_distance(a, c).total();
    CHECK(ab == ba);
    CHECK(ac <= ab + bc);
  }
}

TEST_CASE("corpus-level cer and word-level wer") {
  const std::vector<std::string> refs = {"ab", "cd"};
  const std::vector<std::string> hyps = {"ab", "ce"};
  CHECK(cer(refs, hyps) == doctest::Approx(25.0));
  CHECK(wer(refs, hyps) == doctest::Approx(50.0));

  CHECK(cer(refs, refs) == doctest::Approx(0.0));
  CHECK(wer(refs, refs) == doctest::Approx(0.0));

  // CER may exceed 100 when hypotheses dwarf the references.
  const std::vector<std::string> long_hyps = {"abxxxxxxxx", "cdyyyyyyyy"};
  CHECK(cer(refs, long_hyps) > 100.0);

  CHECK_THROWS_AS(cer({"a"}, {"a", "b"}), Error);
  CHECK_THROWS_AS(wer({"a"}, {"a", "b"}), Error);
}

TEST_CASE("cer(x,x) is zero for random corpora") {
  std::mt19937_64 rng(17);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_string(rng, 10) + "a");
  CHECK(cer(corpus, corpus) == 0.0);
}

TEST_CASE("writer accuracy") {
  CHECK(writer_accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(100.0));
  CHECK(writer_accuracy({1, 2, 3}, {0, 0, 0}) == doctest::Approx(0.0));
  CHECK(writer_accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == doctest::Approx(75.0));
  CHECK_THROWS_AS(writer_accuracy({1}, {1, 2}), Error);
  CHECK_THROWS_AS(writer_accuracy({}, {}), Error);
}

TEST_CASE("chi-square survival function sanity") {
  CHECK(chi_square_sf(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(chi_square_sf(18.475, 7) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(chi_square_sf(0.0, 3) == doctest::Approx(1.0));
}

TEST_CASE("round-half-up formatting") {
  CHECK(format_fixed(49.975, 2) == "49.98");
  CHECK(format_fixed(0.005, 2) == "0.01");
  CHECK(format_fixed(1.0, 2) == "1.00");
  CHECK(round_half_up(2.5, 0) == doctest::Approx(3.0));
}
