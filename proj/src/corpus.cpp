#include "htru/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace htru {

void Corpus::validate(int max_transcription_len) const {
  for (const auto& s : samples) {
    if (s.writer_id < 0 || s.writer_id >= n_writers()) {
      throw Error("Corpus: sample " + std::to_string(s.id) +
                  " has writer_id " + std::to_string(s.writer_id) +
                  " outside the registry");
    }
    if (s.transcription.empty() ||
        static_cast<int>(s.transcription.size()) > max_transcription_len) {
      throw Error("Corpus: sample " + std::to_string(s.id) +
                  " transcription length out of bounds");
    }
    if (!alphabet.valid_word(s.transcription)) {
      throw Error("Corpus: sample " + std::to_string(s.id) +
                  " transcription has out-of-alphabet characters");
    }
    if (s.image.height != 64) {
      throw Error("Corpus: sample " + std::to_string(s.id) +
                  " image height != 64");
    }
  }
}

std::set<int> Corpus::writer_ids_present() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.writer_id);
  return ids;
}

const std::vector<std::string>& default_lexicon() {
  static const std::vector<std::string> words = {
      "the",    "and",    "for",    "are",    "but",    "not",    "you",
      "all",    "can",    "her",    "was",    "one",    "our",    "out",
      "day",    "get",    "has",    "him",    "his",    "how",    "man",
      "new",    "now",    "old",    "see",    "two",    "way",    "who",
      "boy",    "did",    "its",    "let",    "put",    "say",    "she",
      "too",    "use",    "that",   "with",   "have",   "this",   "will",
      "your",   "from",   "they",   "know",   "want",   "been",   "good",
      "much",   "some",   "time",   "very",   "when",   "come",   "here",
      "just",   "like",   "long",   "make",   "many",   "more",   "only",
      "over",   "such",   "take",   "than",   "them",   "well",   "were",
      "word",   "work",   "year",   "back",   "call",   "came",   "each",
      "even",   "find",   "give",   "hand",   "high",   "keep",   "last",
      "left",   "life",   "live",   "look",   "made",   "most",   "move",
      "must",   "name",   "need",   "next",   "open",   "part",   "play",
      "right",  "said",   "same",   "seem",   "show",   "side",   "tell",
      "turn",   "about",  "after",  "again",  "could",  "every",  "first",
      "found",  "great",  "house",  "large",  "learn",  "never",  "other",
      "place",  "plant",  "point",  "small",  "sound",  "spell",  "still",
      "study",  "their",  "there",  "these",  "thing",  "think",  "three",
      "water",  "where",  "which",  "world",  "would",  "write",  "years",
      "always", "animal", "answer", "became", "before", "better", "change",
      "follow", "friend", "ground", "happen", "letter", "little", "mother",
      "moment", "number", "people", "picture", "school", "second", "should",
      "simple", "summer", "turned", "winter",
      "Alice",  "Berlin", "Carlos", "Diana",  "Eva",    "Frank",  "Greta",
      "Henry",  "India",  "James",  "Kate",   "London", "Maria",  "Nora",
      "Oscar",  "Paris",  "Queen",  "Robert", "Sara",   "Tom",    "Una",
      "Victor", "Wendy",  "Xavier", "York",   "Zoe",    "April",  "Monday",
      "Sunday", "June",   "July",   "March",  "Rome",   "Texas",  "Utah",
  };
  return words;
}

const std::vector<std::string>& default_test_lexicon() {
  static const std::vector<std::string> words = {
      "bird",   "blue",   "body",   "book",   "close",  "cold",   "dark",
      "door",   "down",   "earth",  "enough", "example", "eyes",  "face",
      "family", "father", "feet",   "fire",   "food",   "form",   "four",
      "girl",   "gold",   "grow",   "head",   "hear",   "idea",   "India",
      "night",  "north",  "often",  "order",  "paper",  "River",  "Peter",
      "story",  "together", "tree",  "under",  "young",
  };
  return words;
}

std::vector<WriterStyle> derive_styles(int n_writers, uint64_t seed) {
  std::vector<WriterStyle> styles(static_cast<size_t>(n_writers));
  for (int w = 0; w < n_writers; ++w) {
    WriterStyle& st = styles[static_cast<size_t>(w)];
    st.font = w % 3;
    const double span = n_writers > 1 ? static_cast<double>(w) / (n_writers - 1)
                                      : 0.5;
    st.slant_deg = -14.0 + 28.0 * span;
    st.thickness = 1.3 + 0.45 * static_cast<double>(w % 4);
    st.jitter_amp = 0.6 + 0.25 * static_cast<double>((w / 2) % 3);
    st.noise_seed = mix_seed(seed, 0x57261u + static_cast<uint64_t>(w));
  }
  return styles;
}

namespace {

void check_distinct_styles(const std::vector<WriterStyle>& styles) {
  for (size_t i = 0; i < styles.size(); ++i) {
    for (size_t j = i + 1; j < styles.size(); ++j) {
      const auto& a = styles[i];
      const auto& b = styles[j];
      if (a.font == b.font && a.slant_deg == b.slant_deg &&
          a.thickness == b.thickness) {
        throw Error("generate_synthetic_corpus: writers " + std::to_string(i) +
                    " and " + std::to_string(j) +
                    " share the same (font, slant, thickness) style");
      }
    }
  }
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticConfig& cfg, uint64_t seed) {
  if (cfg.n_writers < 2)
    throw Error("generate_synthetic_corpus: need at least 2 writers");
  if (cfg.words_per_writer < 1)
    throw Error("generate_synthetic_corpus: words_per_writer must be >= 1");
  if (cfg.lexicon.empty())
    throw Error("generate_synthetic_corpus: empty lexicon");

  Corpus corpus;
  corpus.provenance = Corpus::Provenance::synthetic;
  for (const auto& word : cfg.lexicon) {
    if (!corpus.alphabet.valid_word(word))
      throw Error("generate_synthetic_corpus: invalid lexicon word \"" + word +
                  "\"");
    if (static_cast<int>(word.size()) > cfg.max_transcription_len)
      throw Error("generate_synthetic_corpus: lexicon word \"" + word +
                  "\" longer than " + std::to_string(cfg.max_transcription_len));
  }

  std::vector<WriterStyle> styles = cfg.styles;
  if (styles.empty()) styles = derive_styles(cfg.n_writers, seed);
  if (static_cast<int>(styles.size()) != cfg.n_writers)
    throw Error("generate_synthetic_corpus: styles size != n_writers");
  check_distinct_styles(styles);

  // Per-writer word list: seeded shuffle of the lexicon, cycled if needed.
  std::vector<std::vector<std::string>> words_of(
      static_cast<size_t>(cfg.n_writers));
  for (int w = 0; w < cfg.n_writers; ++w) {
    std::vector<std::string> pool = cfg.lexicon;
    std::mt19937_64 rng(mix_seed(seed, 0x70AD5u + static_cast<uint64_t>(w)));
    std::shuffle(pool.begin(), pool.end(), rng);
    auto& list = words_of[static_cast<size_t>(w)];
    for (int k = 0; k < cfg.words_per_writer; ++k)
      list.push_back(pool[static_cast<size_t>(k) % pool.size()]);
  }

  const int total = cfg.n_writers * cfg.words_per_writer;
  corpus.samples.resize(static_cast<size_t>(total));
  bool failed = false;
  std::string fail_msg;
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < total; ++idx) {
    const int w = idx / cfg.words_per_writer;
    const int k = idx % cfg.words_per_writer;
    const std::string& word = words_of[static_cast<size_t>(w)][static_cast<size_t>(k)];
    Sample s;
    s.id = idx;
    s.writer_id = w;
    s.transcription = word;
    s.image = render_word(word, styles[static_cast<size_t>(w)],
                          mix_seed(seed, static_cast<uint64_t>(w),
                                   static_cast<uint64_t>(k)));
    if (s.image.width > cfg.max_width) {
#pragma omp critical
      {
        failed = true;
        fail_msg = "generate_synthetic_corpus: sample " + std::to_string(idx) +
                   " (\"" + word + "\") wider than max_width " +
                   std::to_string(cfg.max_width);
      }
    }
    corpus.samples[static_cast<size_t>(idx)] = std::move(s);
  }
  if (failed) throw Error(fail_msg);

  for (int w = 0; w < cfg.n_writers; ++w)
    corpus.writer_registry.push_back("writer-" + std::to_string(w));
  corpus.validate(cfg.max_transcription_len);
  return corpus;
}

GrayImage preprocess(const GrayImage& img, int max_width) {
  if (img.empty()) throw Error("preprocess: empty image");
  if (img.height == 64) {
    if (img.width > max_width)
      throw Error("preprocess: width " + std::to_string(img.width) +
                  " exceeds max_width " + std::to_string(max_width));
    return img;
  }
  const double scale = 64.0 / img.height;
  const int out_w = std::max(1, (int)std::lround(img.width * scale));
  if (out_w > max_width)
    throw Error("preprocess: resized width " + std::to_string(out_w) +
                " exceeds max_width " + std::to_string(max_width));
  GrayImage out(64, out_w);
  const double sy = static_cast<double>(img.height) / 64.0;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < 64; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = (int)std::floor(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = (int)std::floor(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                       wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
      out.at(y, x) = (uint8_t)std::clamp((int)std::lround(v), 0, 255);
    }
  }
  return out;
}

GrayImage pad_to_width(const GrayImage& img, int width) {
  if (width < img.width)
    throw Error("pad_to_width: target narrower than image");
  if (width == img.width) return img;
  GrayImage out(img.height, width, 255);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, x);
  return out;
}

SplitBundle split_by_writers(const Corpus& corpus_train,
                             const Corpus& corpus_test,
                             const std::vector<int>& forget_writer_ids) {
  if (forget_writer_ids.empty())
    throw Error("split_by_writers: empty forget writer set");
  const std::set<int> train_writers = corpus_train.writer_ids_present();
  std::set<int> forget_ids(forget_writer_ids.begin(), forget_writer_ids.end());
  for (int id : forget_ids) {
    if (!train_writers.count(id))
      throw Error("split_by_writers: unknown writer id " + std::to_string(id));
  }
  if (forget_ids.size() == train_writers.size())
    throw Error("split_by_writers: forget set covers all writers; retain set would be empty");

  SplitBundle bundle;
  bundle.forget_writer_ids = forget_ids;
  bundle.retain.alphabet = corpus_train.alphabet;
  bundle.retain.writer_registry = corpus_train.writer_registry;
  bundle.retain.provenance = corpus_train.provenance;
  bundle.forget = bundle.retain;
  for (const auto& s : corpus_train.samples) {
    if (forget_ids.count(s.writer_id))
      bundle.forget.samples.push_back(s);
    else
      bundle.retain.samples.push_back(s);
  }
  bundle.test = corpus_test;

  std::unordered_set<uint64_t> train_keys;
  for (const auto& s : corpus_train.samples)
    train_keys.insert(sample_content_key(s));
  for (const auto& s : bundle.test.samples) {
    if (train_keys.count(sample_content_key(s)))
      throw Error("split_by_writers: test sample " + std::to_string(s.id) +
                  " also appears in the training corpus");
  }
  return bundle;
}

RelabelResult relabel_forget(const Corpus& forget, int n_writers,
                             uint64_t seed) {
  if (n_writers < 2)
    throw Error("relabel_forget: need n_writers >= 2 so an alternative label exists");
  RelabelResult result;
  result.corpus = forget;
  result.original_writer_ids.reserve(forget.samples.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n_writers - 2);
  for (auto& s : result.corpus.samples) {
    const int orig = s.writer_id;
    result.original_writer_ids.push_back(orig);
    int v = pick(rng);
    if (v >= orig) ++v;  // skip the original id
    s.writer_id = v;
  }
  return result;
}

uint64_t sample_content_key(const Sample& s) {
  uint64_t h = fnv1a64(s.image.pixels.data(), s.image.pixels.size());
  h = fnv1a64(s.transcription.data(), s.transcription.size(), h);
  const int dims[2] = {s.image.height, s.image.width};
  return fnv1a64(dims, sizeof(dims), h);
}

}  // namespace htru
