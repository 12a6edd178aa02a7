#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "htru/common.hpp"
#include "htru/corpus.hpp"
#include "htru/dataset_io.hpp"

using namespace htru;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config(int writers = 2, int words = 3) {
  SyntheticConfig cfg;
  cfg.n_writers = writers;
  cfg.words_per_writer = words;
  cfg.lexicon = {"cat", "dog", "bird", "Sun", "apple", "quo"};
  cfg.max_width = 256;
  cfg.max_transcription_len = 12;
  return cfg;
}

}  // namespace

TEST_CASE("alphabet encode/decode round trip over the full lexicon") {
  const Alphabet alphabet;
  CHECK(alphabet.symbols().size() == 52);
  CHECK(Alphabet::kPadIndex == 52);
  for (const auto& word : default_lexicon()) {
    const auto slots = alphabet.encode(word, 20);
    CHECK(alphabet.decode(slots) == word);
  }
  const auto slots = alphabet.encode("cat", 5);
  CHECK(slots == std::vector<int>{alphabet.index_of('c'), alphabet.index_of('a'),
                                  alphabet.index_of('t'), 52, 52});
}

TEST_CASE("encode rejects invalid characters naming character and position") {
  const Alphabet alphabet;
  try {
    alphabet.encode("ab3d", 10);
    FAIL("expected rejection");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find("position 2") != std::string::npos);
  }
  CHECK_THROWS_AS(alphabet.encode("toolongword", 5), Error);
}

TEST_CASE("generation: counts, determinism, seed sensitivity") {
  const SyntheticConfig cfg = small_config(2, 3);
  const Corpus a = generate_synthetic_corpus(cfg, 7);
  CHECK(a.samples.size() == 6);
  CHECK(a.writer_ids_present() == std::set<int>{0, 1});

  const Corpus b = generate_synthetic_corpus(cfg, 7);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].transcription == b.samples[i].transcription);
  }

  const Corpus c = generate_synthetic_corpus(cfg, 8);
  bool any_pixel_differs = false;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    if (c.samples[i].image.width != a.samples[i].image.width ||
        c.samples[i].image.pixels != a.samples[i].image.pixels)
      any_pixel_differs = true;
  }
  CHECK(any_pixel_differs);
}

TEST_CASE("generation rejects bad inputs") {
  SyntheticConfig cfg = small_config();
  cfg.lexicon = {"ok", "bad word"};
  try {
    generate_synthetic_corpus(cfg, 1);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad word") != std::string::npos);
  }

  cfg = small_config();
  cfg.n_writers = 1;
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 1), Error);

  cfg = small_config();
  cfg.lexicon.clear();
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 1), Error);
}

TEST_CASE("distinct style triples are enforced") {
  SyntheticConfig cfg = small_config(2, 1);
  cfg.styles = derive_styles(2, 4);
  cfg.styles[1] = cfg.styles[0];  // collide
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 1), Error);
}

TEST_CASE("preprocess geometry") {
  // aspect-preserving resize: 128x256 -> 64x128
  GrayImage tall(128, 256, 200);
  const GrayImage resized = preprocess(tall, 800);
  CHECK(resized.height == 64);
  CHECK(resized.width == 128);

  // idempotent on conforming images
  const GrayImage again = preprocess(resized, 800);
  CHECK(again == resized);

  // batch padding: 64x100 padded to the batch max 120
  GrayImage img(64, 100, 10);
  const GrayImage padded = pad_to_width(img, 120);
  CHECK(padded.width == 120);
  for (int y = 0; y < 64; ++y)
    for (int x = 100; x < 120; ++x) CHECK(padded.at(y, x) == 255);

  // cap rule
  GrayImage huge(64, 10000, 0);
  CHECK_THROWS_AS(preprocess(huge, 800), Error);
  GrayImage empty;
  CHECK_THROWS_AS(preprocess(empty, 800), Error);
}

TEST_CASE("split by writers") {
  SyntheticConfig cfg = small_config(4, 5);
  const Corpus train = generate_synthetic_corpus(cfg, 21);
  cfg.words_per_writer = 2;
  const Corpus test = generate_synthetic_corpus(cfg, 22);

  const SplitBundle bundle = split_by_writers(train, test, {3});
  CHECK(bundle.retain.writer_ids_present() == std::set<int>{0, 1, 2});
  CHECK(bundle.forget.writer_ids_present() == std::set<int>{3});
  CHECK(bundle.retain.samples.size() + bundle.forget.samples.size() ==
        train.samples.size());

  // disjointness is assertable by set intersection
  std::set<int> inter;
  for (int id : bundle.retain.writer_ids_present())
    if (bundle.forget_writer_ids.count(id)) inter.insert(id);
  CHECK(inter.empty());

  CHECK_THROWS_AS(split_by_writers(train, test, {0, 1, 2, 3}), Error);
  CHECK_THROWS_AS(split_by_writers(train, test, {9}), Error);
  CHECK_THROWS_AS(split_by_writers(train, test, {}), Error);

  // content identity: a test set sharing a training sample is rejected
  Corpus bad_test = test;
  bad_test.samples[0] = train.samples[0];
  CHECK_THROWS_AS(split_by_writers(train, bad_test, {3}), Error);
}

TEST_CASE("relabeling never keeps the original id") {
  SyntheticConfig cfg = small_config(5, 8);
  const Corpus train = generate_synthetic_corpus(cfg, 31);
  cfg.words_per_writer = 2;
  const Corpus test = generate_synthetic_corpus(cfg, 32);
  const SplitBundle bundle = split_by_writers(train, test, {1, 3});

  const RelabelResult rl = relabel_forget(bundle.forget, 5, 99);
  REQUIRE(rl.corpus.samples.size() == bundle.forget.samples.size());
  for (size_t i = 0; i < rl.corpus.samples.size(); ++i) {
    CHECK(rl.corpus.samples[i].writer_id != rl.original_writer_ids[i]);
    CHECK(rl.corpus.samples[i].writer_id >= 0);
    CHECK(rl.corpus.samples[i].writer_id < 5);
    // images and transcriptions unchanged
    CHECK(rl.corpus.samples[i].image == bundle.forget.samples[i].image);
    CHECK(rl.corpus.samples[i].transcription ==
          bundle.forget.samples[i].transcription);
  }

  const RelabelResult rl2 = relabel_forget(bundle.forget, 5, 99);
  for (size_t i = 0; i < rl.corpus.samples.size(); ++i)
    CHECK(rl.corpus.samples[i].writer_id == rl2.corpus.samples[i].writer_id);

  CHECK_THROWS_AS(relabel_forget(bundle.forget, 1, 99), Error);
}

TEST_CASE("two writers force a deterministic flip") {
  SyntheticConfig cfg = small_config(2, 4);
  const Corpus train = generate_synthetic_corpus(cfg, 41);
  cfg.words_per_writer = 1;
  const Corpus test = generate_synthetic_corpus(cfg, 42);
  const SplitBundle bundle = split_by_writers(train, test, {0});
  const RelabelResult rl = relabel_forget(bundle.forget, 2, 5);
  for (const auto& s : rl.corpus.samples) CHECK(s.writer_id == 1);
}

TEST_CASE("dataset directory round trip preserves content") {
  const fs::path dir = fs::temp_directory_path() / "htru_corpus_test";
  fs::remove_all(dir);
  const Corpus corpus = generate_synthetic_corpus(small_config(3, 2), 55);
  save_corpus(dir.string(), corpus);
  const LoadResult loaded = load_iam_format(dir.string(), "", 256, 12);
  CHECK(loaded.dropped_count == 0);
  REQUIRE(loaded.corpus.samples.size() == corpus.samples.size());
  for (size_t i = 0; i < corpus.samples.size(); ++i) {
    CHECK(loaded.corpus.samples[i].image == corpus.samples[i].image);
    CHECK(loaded.corpus.samples[i].writer_id == corpus.samples[i].writer_id);
    CHECK(loaded.corpus.samples[i].transcription == corpus.samples[i].transcription);
  }
  fs::remove_all(dir);
}

TEST_CASE("ingestion filters out-of-alphabet rows and counts them") {
  const fs::path dir = fs::temp_directory_path() / "htru_ingest_test";
  fs::remove_all(dir);
  const Corpus corpus = generate_synthetic_corpus(small_config(2, 2), 66);
  save_corpus(dir.string(), corpus);
  {
    std::ofstream index(dir / "index.tsv", std::ios::app);
    index << "99\t0\tha3d\n";  // digit: dropped by the alphabet filter
  }
  fs::copy_file(dir / "images/0.png", dir / "images/99.png");
  const LoadResult loaded = load_iam_format(dir.string(), "", 256, 12);
  CHECK(loaded.dropped_count == 1);
  CHECK(loaded.corpus.samples.size() == corpus.samples.size());
  fs::remove_all(dir);
}

TEST_CASE("missing index and empty survivor errors") {
  const fs::path dir = fs::temp_directory_path() / "htru_missing_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  try {
    load_iam_format(dir.string(), "", 256, 12);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing index") != std::string::npos);
  }
  {
    std::ofstream index(dir / "index.tsv");
    index << "sample_id\twriter_id\ttranscription\n";
    index << "0\t0\t123\n";  // nothing survives the filter
  }
  CHECK_THROWS_AS(load_iam_format(dir.string(), "", 256, 12), Error);
  fs::remove_all(dir);
}

TEST_CASE("partition files select rows") {
  const fs::path dir = fs::temp_directory_path() / "htru_partition_test";
  fs::remove_all(dir);
  const Corpus corpus = generate_synthetic_corpus(small_config(2, 3), 77);
  save_corpus(dir.string(), corpus);
  fs::create_directories(dir / "partitions");
  {
    std::ofstream p(dir / "partitions/train.ids");
    p << "0\n1\n4\n";
  }
  const LoadResult loaded =
      load_iam_format(dir.string(), "partitions/train.ids", 256, 12);
  CHECK(loaded.corpus.samples.size() == 3);
  CHECK_THROWS_AS(load_iam_format(dir.string(), "partitions/nope.ids", 256, 12),
                  Error);
  fs::remove_all(dir);
}

TEST_CASE("relabel distribution is uniform over the alternatives") {
  SyntheticConfig cfg = small_config(6, 40);
  const Corpus train = generate_synthetic_corpus(cfg, 88);
  cfg.words_per_writer = 2;
  const Corpus test = generate_synthetic_corpus(cfg, 89);
  const SplitBundle bundle = split_by_writers(train, test, {0, 5});
  const RelabelResult rl = relabel_forget(bundle.forget, 6, 123);

  // chi-square against the exact per-class expectation
  std::vector<double> expected(6, 0.0), observed(6, 0.0);
  for (size_t i = 0; i < rl.corpus.samples.size(); ++i) {
    for (int c = 0; c < 6; ++c)
      if (c != rl.original_writer_ids[i]) expected[static_cast<size_t>(c)] += 1.0 / 5.0;
    observed[static_cast<size_t>(rl.corpus.samples[i].writer_id)] += 1.0;
  }
  double chi2 = 0.0;
  for (int c = 0; c < 6; ++c)
    if (expected[static_cast<size_t>(c)] > 0)
      chi2 += (observed[c] - expected[c]) * (observed[c] - expected[c]) / expected[c];
  CHECK(chi_square_sf(chi2, 5) > 0.01);
}
