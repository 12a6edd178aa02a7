#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <unordered_set>

#include "htru/corpus.hpp"
#include "htru/mia.hpp"

using namespace htru;

namespace {

ModelConfig small_config(int n_writers) {
  ModelConfig cfg;
  cfg.cnn_channels = {4, 8};
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.ff_dim = 24;
  cfg.n_writers = n_writers;
  cfg.max_len = 6;
  cfg.seed = 33;
  return cfg;
}

Corpus corpus_of(int writers, int words, uint64_t seed) {
  SyntheticConfig sc;
  sc.n_writers = writers;
  sc.words_per_writer = words;
  sc.lexicon = {"cat", "dog", "sun", "map", "tea", "fox"};
  sc.max_width = 256;
  sc.max_transcription_len = 6;
  return generate_synthetic_corpus(sc, seed);
}

// Synthetic feature bundles for classifier-level tests.
MIADatasetBundle blob_bundle(int n_member, int n_nonmember, double separation,
                             uint64_t seed, int dim = 12) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  MIADatasetBundle bundle;
  bundle.train.dim = bundle.eval_retain.dim = bundle.eval_test.dim =
      bundle.query_forget.dim = dim;
  auto push = [&](MIAFeatures& f, double center) {
    for (int c = 0; c < dim; ++c) f.rows.push_back(center + noise(rng));
  };
  const int member_train = n_member * 4 / 5;
  const int nonmember_train = n_nonmember * 4 / 5;
  for (int i = 0; i < member_train; ++i) {
    push(bundle.train, separation);
    bundle.train_labels.push_back(1);
  }
  for (int i = 0; i < nonmember_train; ++i) {
    push(bundle.train, -separation);
    bundle.train_labels.push_back(0);
  }
  for (int i = 0; i < n_member - member_train; ++i)
    push(bundle.eval_retain, separation);
  for (int i = 0; i < n_nonmember - nonmember_train; ++i)
    push(bundle.eval_test, -separation);
  for (int i = 0; i < 40; ++i) push(bundle.query_forget, 0.0);
  return bundle;
}

}  // namespace

TEST_CASE("bundle split arithmetic and forget exclusion") {
  const Corpus train = corpus_of(3, 50, 91);
  Corpus test = corpus_of(3, 17, 92);
  test.samples.resize(50);
  const SplitBundle split = split_by_writers(train, test, {2});
  REQUIRE(split.retain.samples.size() == 100);
  REQUIRE(split.forget.samples.size() == 50);

  const ModelState model = build_model(small_config(3));
  const MIADatasetBundle b =
      build_mia_dataset(model, split.retain, split.test, split.forget, 7, 16);

  // retain of 100, test of 50 -> train 80 + 40, eval 20 + 10
  CHECK(b.train.n() == 120);
  CHECK(b.eval_retain.n() == 20);
  CHECK(b.eval_test.n() == 10);
  CHECK(b.query_forget.n() == 50);
  int members = 0;
  for (int l : b.train_labels) members += l;
  CHECK(members == 80);

  // deterministic under the seed
  const MIADatasetBundle b2 =
      build_mia_dataset(model, split.retain, split.test, split.forget, 7, 16);
  CHECK(b.train.rows == b2.train.rows);
  CHECK(b.eval_retain.rows == b2.eval_retain.rows);

  // feature dimensionality is exactly max_len x 53, writer logits excluded
  CHECK(b.train.dim == model.cfg.max_len * 53);

  // no forget feature appears in the MIA train rows
  auto row_key = [&](const MIAFeatures& f, int r) {
    return fnv1a64(f.rows.data() + static_cast<size_t>(r) * f.dim,
                   sizeof(double) * static_cast<size_t>(f.dim));
  };
  std::unordered_set<uint64_t> train_keys;
  for (int r = 0; r < b.train.n(); ++r) train_keys.insert(row_key(b.train, r));
  for (int r = 0; r < b.query_forget.n(); ++r)
    CHECK(train_keys.count(row_key(b.query_forget, r)) == 0);
}

TEST_CASE("separable blobs reach near-perfect eval accuracy") {
  const MIADatasetBundle bundle = blob_bundle(100, 100, 6.0, 21);
  MIAConfig cfg;
  cfg.epochs = 120;
  cfg.seed = 5;
  const MIAModelState mia = train_mia(bundle, cfg);
  CHECK(mia_eval_accuracy(mia, bundle) >= 99.0);
}

TEST_CASE("label-shuffled features sit at chance") {
  // signal-free features plus shuffled labels; the large eval split keeps
  // the +-5 band comfortably above sampling noise
  MIADatasetBundle bundle = blob_bundle(1000, 1000, 0.0, 22);
  std::mt19937_64 rng(9);
  std::shuffle(bundle.train_labels.begin(), bundle.train_labels.end(), rng);
  MIAConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 6;
  const MIAModelState mia = train_mia(bundle, cfg);
  const double acc = mia_eval_accuracy(mia, bundle);
  CHECK(acc > 45.0);
  CHECK(acc < 55.0);
}

TEST_CASE("zero training epochs stay near chance on balanced eval") {
  const MIADatasetBundle bundle = blob_bundle(100, 100, 0.0, 23);
  MIAConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 7;
  const MIAModelState mia = train_mia(bundle, cfg);
  const double acc = mia_eval_accuracy(mia, bundle);
  CHECK(acc > 30.0);
  CHECK(acc < 70.0);
}

TEST_CASE("single-class training data is rejected") {
  MIADatasetBundle bundle = blob_bundle(50, 50, 1.0, 24);
  for (auto& l : bundle.train_labels) l = 1;
  MIAConfig cfg;
  CHECK_THROWS_AS(train_mia(bundle, cfg), Error);
}

TEST_CASE("report rows: threshold, rounding, and row sums") {
  // a degenerate model scoring everything below 0.5
  MIADatasetBundle bundle = blob_bundle(64, 64, 2.0, 25);
  MIAConfig cfg;
  cfg.epochs = 80;
  cfg.seed = 8;
  const MIAModelState mia = train_mia(bundle, cfg);

  // every nonmember-side query scores < 0.5 on a separable problem
  MIADatasetBundle shifted = bundle;
  shifted.query_forget.rows.assign(shifted.query_forget.rows.size(), -8.0);
  const MIAReport report = evaluate_mia(mia, shifted, cfg);
  REQUIRE(report.forget.has_value());
  CHECK(report.forget->seen == 0.0);
  CHECK(report.forget->unseen == 100.0);
  CHECK(report.forget->seen + report.forget->unseen == 100.0);
  REQUIRE(report.retain_eval.has_value());
  CHECK(report.retain_eval->seen + report.retain_eval->unseen == 100.0);

  // empty set -> omitted row with a warning
  MIADatasetBundle empty = bundle;
  empty.query_forget.rows.clear();
  const MIAReport r2 = evaluate_mia(mia, empty, cfg);
  CHECK_FALSE(r2.forget.has_value());
}

TEST_CASE("chance-level sanity on an untrained recognizer") {
  // member and non-member renders share writers and lexicon, so untrained
  // features carry no membership signal; eval sizes keep noise below the band
  const Corpus train = corpus_of(5, 120, 93);
  const Corpus test = corpus_of(5, 40, 94);
  const SplitBundle split = split_by_writers(train, test, {4});
  const ModelState model = build_model(small_config(5));  // never trained

  MIAConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 11;
  const MIADatasetBundle bundle =
      build_mia_dataset(model, split.retain, split.test, split.forget, 31, 16);
  const MIAModelState mia = train_mia(bundle, cfg);
  const double acc = mia_eval_accuracy(mia, bundle);
  CHECK(acc >= 43.0);
  CHECK(acc <= 57.0);
}
