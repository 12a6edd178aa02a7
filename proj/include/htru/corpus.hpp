#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "htru/alphabet.hpp"
#include "htru/fontset.hpp"
#include "htru/png_io.hpp"

namespace htru {

struct Sample {
  int64_t id = 0;
  GrayImage image;  // preprocessed: height 64, width <= max_width
  int writer_id = 0;
  std::string transcription;
};

struct Corpus {
  enum class Provenance { synthetic, iam_format };

  std::vector<Sample> samples;
  Alphabet alphabet;
  std::vector<std::string> writer_registry;  // index == writer_id
  Provenance provenance = Provenance::synthetic;

  int n_writers() const { return static_cast<int>(writer_registry.size()); }
  // Checks the type invariants; throws on violation.
  void validate(int max_transcription_len) const;
  // Writer ids that actually occur in samples.
  std::set<int> writer_ids_present() const;
};

struct SplitBundle {
  Corpus retain;
  Corpus forget;
  Corpus test;
  std::set<int> forget_writer_ids;
};

struct SyntheticConfig {
  int n_writers = 0;
  int words_per_writer = 0;
  std::vector<std::string> lexicon;
  std::vector<WriterStyle> styles;  // one per writer
  int max_width = 256;
  int max_transcription_len = 20;
};

// Built-in word pools (letters only). The test pool is disjoint from the
// train pool so held-out samples contain genuinely unseen words.
const std::vector<std::string>& default_lexicon();
const std::vector<std::string>& default_test_lexicon();

// Deterministic per-writer styles with pairwise-distinct
// (font, slant, thickness) triples.
std::vector<WriterStyle> derive_styles(int n_writers, uint64_t seed);

Corpus generate_synthetic_corpus(const SyntheticConfig& cfg, uint64_t seed);

// Resize to height 64 preserving aspect ratio. Identity on conforming
// images. Throws when the resized width exceeds max_width.
GrayImage preprocess(const GrayImage& img, int max_width);
// Right-pad with background pixels (batch assembly uses the batch max).
GrayImage pad_to_width(const GrayImage& img, int width);

SplitBundle split_by_writers(const Corpus& corpus_train,
                             const Corpus& corpus_test,
                             const std::vector<int>& forget_writer_ids);

struct RelabelResult {
  Corpus corpus;                          // forget set with new writer ids
  std::vector<int> original_writer_ids;   // parallel to corpus.samples
};

// Reassign writer ids uniformly over the other classes; images and
// transcriptions are untouched.
RelabelResult relabel_forget(const Corpus& forget, int n_writers,
                             uint64_t seed);

// Stable content identity for "same sample" checks across corpora.
uint64_t sample_content_key(const Sample& s);

}  // namespace htru
