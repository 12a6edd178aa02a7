#include "htru/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace htru {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": " + v);
  }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed/counter for " + key + ": " + v);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": " + v);
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& v, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, int>)
      out.push_back(parse_int(item, key));
    else
      out.push_back(static_cast<T>(parse_u64(item, key)));
  }
  return out;
}

std::string join_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_list64(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

std::map<ModuleGroup, double> parse_rates(const std::string& text) {
  std::map<ModuleGroup, double> rates;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: bad rate entry \"" + item +
                        "\" (expected group=percent)");
    const ModuleGroup g = module_group_from_name(trim(item.substr(0, eq)));
    rates[g] = parse_double(trim(item.substr(eq + 1)), "prune.rates");
  }
  return rates;
}

std::string format_rates(const std::map<ModuleGroup, double>& rates) {
  std::string out;
  bool first = true;
  for (const auto& [g, r] : rates) {
    out += (first ? "" : ",") + module_group_name(g) + "=" + fmt_double(r);
    first = false;
  }
  return out;
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section at line " +
                          std::to_string(line_no));
      section = line.substr(1, line.size() - 2);
      if (section != "corpus" && section != "split" && section != "model" &&
          section != "train" && section != "prune" && section != "rl" &&
          section != "mia" && section != "output")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " +
                        std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;

    if (section == "corpus") {
      if (key == "kind") {
        if (value != "synthetic" && value != "iam_format")
          throw ConfigError("config: corpus.kind must be synthetic or iam_format");
        cfg.corpus.kind = value;
      } else if (key == "n_writers") cfg.corpus.n_writers = parse_int(value, full);
      else if (key == "words_per_writer") cfg.corpus.words_per_writer = parse_int(value, full);
      else if (key == "test_words_per_writer") cfg.corpus.test_words_per_writer = parse_int(value, full);
      else if (key == "max_width") cfg.corpus.max_width = parse_int(value, full);
      else if (key == "seed") cfg.corpus.seed = parse_u64(value, full);
      else if (key == "lexicon_file") cfg.corpus.lexicon_file = value;
      else if (key == "test_lexicon_file") cfg.corpus.test_lexicon_file = value;
      else if (key == "iam_root") cfg.corpus.iam_root = value;
      else if (key == "iam_train_partition") cfg.corpus.iam_train_partition = value;
      else if (key == "iam_test_partition") cfg.corpus.iam_test_partition = value;
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "split") {
      if (key == "forget_writers") cfg.split.forget_writers = parse_list<int>(value, full);
      else if (key == "seed") cfg.split.seed = parse_u64(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "model") {
      if (key == "cnn_channels") cfg.model.cnn_channels = parse_list<int>(value, full);
      else if (key == "d_model") cfg.model.d_model = parse_int(value, full);
      else if (key == "n_blocks") cfg.model.n_blocks = parse_int(value, full);
      else if (key == "n_heads") cfg.model.n_heads = parse_int(value, full);
      else if (key == "ff_dim") cfg.model.ff_dim = parse_int(value, full);
      else if (key == "max_len") cfg.model.max_len = parse_int(value, full);
      else if (key == "enable_writer_head") cfg.model.enable_writer_head = parse_bool(value, full);
      else if (key == "seed") cfg.model.seed = parse_u64(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "train") {
      if (key == "batch_size") cfg.train.batch_size = parse_int(value, full);
      else if (key == "learning_rate") cfg.train.learning_rate = parse_double(value, full);
      else if (key == "decay_factor") cfg.train.decay_factor = parse_double(value, full);
      else if (key == "decay_interval") cfg.train.decay_interval = parse_int(value, full);
      else if (key == "epochs") cfg.train.epochs = parse_int(value, full);
      else if (key == "w_rec") cfg.train.w_rec = parse_double(value, full);
      else if (key == "w_writer") cfg.train.w_writer = parse_double(value, full);
      else if (key == "eval_interval") cfg.train.eval_interval = parse_int(value, full);
      else if (key == "seed") cfg.train.seed = parse_u64(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "prune") {
      if (key == "rates") cfg.prune.rates = parse_rates(value);
      else if (key == "epsilon") cfg.prune.epsilon = parse_double(value, full);
      else if (key == "protect_heads") cfg.prune.protect_heads = parse_bool(value, full);
      else if (key == "batch_size") cfg.prune.batch_size = parse_int(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "rl") {
      if (key == "iterations") cfg.rl.iterations = parse_list<int64_t>(value, full);
      else if (key == "learning_rate") cfg.rl.learning_rate = parse_double(value, full);
      else if (key == "batch_size") cfg.rl.batch_size = parse_int(value, full);
      else if (key == "allow_regrowth") cfg.rl.allow_regrowth = parse_bool(value, full);
      else if (key == "forget_rec_loss") cfg.rl.forget_rec_loss = parse_bool(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "mia") {
      if (key == "epochs") cfg.mia.epochs = parse_int(value, full);
      else if (key == "hidden") cfg.mia.hidden = parse_list<int>(value, full);
      else if (key == "balance") cfg.mia.balance = parse_bool(value, full);
      else if (key == "learning_rate") cfg.mia.learning_rate = parse_double(value, full);
      else if (key == "batch_size") cfg.mia.batch_size = parse_int(value, full);
      else if (key == "seed") cfg.mia.seed = parse_u64(value, full);
      else throw ConfigError("config: unknown key " + full);
    } else if (section == "output") {
      if (key == "dir") cfg.output.dir = value;
      else throw ConfigError("config: unknown key " + full);
    } else {
      throw ConfigError("config: key outside any section at line " +
                        std::to_string(line_no));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

void ExperimentConfig::validate() const {
  if (corpus.kind == "synthetic") {
    if (corpus.n_writers < 2)
      throw ConfigError("config: corpus.n_writers must be >= 2");
    if (corpus.words_per_writer < 1 || corpus.test_words_per_writer < 1)
      throw ConfigError("config: words per writer must be >= 1");
  } else if (corpus.iam_root.empty()) {
    throw ConfigError("config: corpus.kind=iam_format requires corpus.iam_root");
  }
  if (corpus.max_width < 16)
    throw ConfigError("config: corpus.max_width too small");
  for (int w : split.forget_writers)
    if (w < 0) throw ConfigError("config: negative forget writer id");
  if (!std::is_sorted(rl.iterations.begin(), rl.iterations.end()))
    throw ConfigError("config: rl.iterations must be ascending");
  for (int64_t it : rl.iterations)
    if (it < 1) throw ConfigError("config: rl.iterations must be positive");
  if (mia.hidden.size() != 2)
    throw ConfigError("config: mia.hidden needs exactly two widths");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "[corpus]\n";
  out << "kind = " << corpus.kind << "\n";
  out << "n_writers = " << corpus.n_writers << "\n";
  out << "words_per_writer = " << corpus.words_per_writer << "\n";
  out << "test_words_per_writer = " << corpus.test_words_per_writer << "\n";
  out << "max_width = " << corpus.max_width << "\n";
  out << "seed = " << corpus.seed << "\n";
  out << "lexicon_file = " << corpus.lexicon_file << "\n";
  out << "test_lexicon_file = " << corpus.test_lexicon_file << "\n";
  out << "iam_root = " << corpus.iam_root << "\n";
  out << "iam_train_partition = " << corpus.iam_train_partition << "\n";
  out << "iam_test_partition = " << corpus.iam_test_partition << "\n";
  out << "[split]\n";
  out << "forget_writers = " << join_list(split.forget_writers) << "\n";
  out << "seed = " << split.seed << "\n";
  out << "[model]\n";
  out << "cnn_channels = " << join_list(model.cnn_channels) << "\n";
  out << "d_model = " << model.d_model << "\n";
  out << "n_blocks = " << model.n_blocks << "\n";
  out << "n_heads = " << model.n_heads << "\n";
  out << "ff_dim = " << model.ff_dim << "\n";
  out << "max_len = " << model.max_len << "\n";
  out << "enable_writer_head = " << (model.enable_writer_head ? "true" : "false") << "\n";
  out << "seed = " << model.seed << "\n";
  out << "[train]\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "learning_rate = " << fmt_double(train.learning_rate) << "\n";
  out << "decay_factor = " << fmt_double(train.decay_factor) << "\n";
  out << "decay_interval = " << train.decay_interval << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "w_rec = " << fmt_double(train.w_rec) << "\n";
  out << "w_writer = " << fmt_double(train.w_writer) << "\n";
  out << "eval_interval = " << train.eval_interval << "\n";
  out << "seed = " << train.seed << "\n";
  out << "[prune]\n";
  out << "rates = " << format_rates(prune.rates) << "\n";
  out << "epsilon = " << fmt_double(prune.epsilon) << "\n";
  out << "protect_heads = " << (prune.protect_heads ? "true" : "false") << "\n";
  out << "batch_size = " << prune.batch_size << "\n";
  out << "[rl]\n";
  out << "iterations = " << join_list64(rl.iterations) << "\n";
  out << "learning_rate = " << fmt_double(rl.learning_rate) << "\n";
  out << "batch_size = " << rl.batch_size << "\n";
  out << "allow_regrowth = " << (rl.allow_regrowth ? "true" : "false") << "\n";
  out << "forget_rec_loss = " << (rl.forget_rec_loss ? "true" : "false") << "\n";
  out << "[mia]\n";
  out << "epochs = " << mia.epochs << "\n";
  out << "hidden = " << join_list(mia.hidden) << "\n";
  out << "balance = " << (mia.balance ? "true" : "false") << "\n";
  out << "learning_rate = " << fmt_double(mia.learning_rate) << "\n";
  out << "batch_size = " << mia.batch_size << "\n";
  out << "seed = " << mia.seed << "\n";
  // [output] dir is a location, not an experiment parameter; it stays out
  // of the canonical form so runs in different directories compare equal.
  return out.str();
}

std::string ExperimentConfig::hash() const { return to_hex64(fnv1a64(canonical())); }

ModelConfig ExperimentConfig::model_config(int n_writers) const {
  ModelConfig mc;
  mc.cnn_channels = model.cnn_channels;
  mc.d_model = model.d_model;
  mc.n_blocks = model.n_blocks;
  mc.n_heads = model.n_heads;
  mc.ff_dim = model.ff_dim;
  mc.max_len = model.max_len;
  mc.enable_writer_head = model.enable_writer_head;
  mc.seed = model.seed;
  mc.n_writers = n_writers;
  return mc;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig tc;
  tc.batch_size = train.batch_size;
  tc.learning_rate = train.learning_rate;
  tc.decay_factor = train.decay_factor;
  tc.decay_interval = train.decay_interval;
  tc.epochs = train.epochs;
  tc.w_rec = train.w_rec;
  tc.w_writer = train.w_writer;
  tc.eval_interval = train.eval_interval;
  tc.seed = train.seed;
  return tc;
}

MIAConfig ExperimentConfig::mia_config() const {
  MIAConfig mc;
  mc.epochs = mia.epochs;
  mc.hidden = mia.hidden;
  mc.balance = mia.balance;
  mc.learning_rate = mia.learning_rate;
  mc.batch_size = mia.batch_size;
  mc.seed = mia.seed;
  return mc;
}

}  // namespace htru
