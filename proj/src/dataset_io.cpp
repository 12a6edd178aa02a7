#include "htru/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace fs = std::filesystem;

namespace htru {

void save_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream index(fs::path(dir) / "index.tsv");
  if (!index) throw Error("save_corpus: cannot write index in " + dir);
  index << "sample_id\twriter_id\ttranscription\n";
  for (const auto& s : corpus.samples) {
    index << s.id << '\t' << s.writer_id << '\t' << s.transcription << '\n';
    write_png_gray((fs::path(dir) / "images" / (std::to_string(s.id) + ".png")).string(),
                   s.image);
  }
  std::ofstream writers(fs::path(dir) / "writers.tsv");
  for (size_t w = 0; w < corpus.writer_registry.size(); ++w)
    writers << w << '\t' << corpus.writer_registry[w] << '\n';
}

namespace {

struct IndexRow {
  int64_t id;
  int writer;
  std::string text;
};

std::vector<IndexRow> read_index(const std::string& root) {
  const fs::path index_path = fs::path(root) / "index.tsv";
  std::ifstream in(index_path);
  if (!in) throw Error("load_iam_format: missing index: " + index_path.string());
  std::vector<IndexRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // header line
      first = false;
      continue;
    }
    std::istringstream ss(line);
    IndexRow row;
    std::string id_s, writer_s;
    if (!std::getline(ss, id_s, '\t') || !std::getline(ss, writer_s, '\t') ||
        !std::getline(ss, row.text)) {
      throw Error("load_iam_format: malformed index row: " + line);
    }
    row.id = std::stoll(id_s);
    row.writer = std::stoi(writer_s);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

LoadResult load_iam_format(const std::string& root,
                           const std::string& partition_spec, int max_width,
                           int max_transcription_len) {
  LoadResult result;
  result.corpus.provenance = Corpus::Provenance::iam_format;
  const Alphabet& alphabet = result.corpus.alphabet;

  std::vector<IndexRow> rows = read_index(root);

  // Alphabet/length filter, counting dropped rows.
  std::vector<IndexRow> kept;
  for (auto& row : rows) {
    const bool ok = alphabet.valid_word(row.text) &&
                    static_cast<int>(row.text.size()) <= max_transcription_len;
    if (ok)
      kept.push_back(std::move(row));
    else
      ++result.dropped_count;
  }
  if (kept.empty())
    throw Error("load_iam_format: zero samples survive the alphabet filter in " + root);

  // Contiguous writer remap over all surviving rows (partition-independent).
  std::map<int, int> remap;
  for (const auto& row : kept) remap.emplace(row.writer, 0);
  {
    int next = 0;
    for (auto& [orig, id] : remap) id = next++;
  }

  // Optional writer descriptors.
  std::map<int, std::string> names;
  {
    std::ifstream wfile(fs::path(root) / "writers.tsv");
    std::string line;
    while (wfile && std::getline(wfile, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      names[std::stoi(line.substr(0, tab))] = line.substr(tab + 1);
    }
  }
  result.corpus.writer_registry.resize(remap.size());
  for (const auto& [orig, id] : remap) {
    auto it = names.find(orig);
    result.corpus.writer_registry[static_cast<size_t>(id)] =
        it != names.end() ? it->second : ("iam-" + std::to_string(orig));
  }

  std::unordered_set<int64_t> partition_ids;
  bool use_partition = !partition_spec.empty();
  if (use_partition) {
    std::ifstream pfile(fs::path(root) / partition_spec);
    if (!pfile)
      throw Error("load_iam_format: missing partition file: " + partition_spec);
    std::string line;
    while (std::getline(pfile, line)) {
      if (!line.empty()) partition_ids.insert(std::stoll(line));
    }
  }

  for (const auto& row : kept) {
    if (use_partition && !partition_ids.count(row.id)) continue;
    const fs::path img_path =
        fs::path(root) / "images" / (std::to_string(row.id) + ".png");
    if (!fs::exists(img_path))
      throw Error("load_iam_format: missing image: " + img_path.string());
    Sample s;
    s.id = row.id;
    s.writer_id = remap.at(row.writer);
    s.transcription = row.text;
    s.image = preprocess(read_png_gray(img_path.string()), max_width);
    result.corpus.samples.push_back(std::move(s));
  }
  if (result.corpus.samples.empty())
    throw Error("load_iam_format: partition " + partition_spec +
                " selected zero samples");
  result.corpus.validate(max_transcription_len);
  return result;
}

}  // namespace htru
