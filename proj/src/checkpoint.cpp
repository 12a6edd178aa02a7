#include "htru/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace htru {

namespace {

constexpr char kMagic[8] = {'H', 'T', 'R', 'U', 'C', 'O', 'N', 'T'};

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

const std::vector<double>& Container::array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return a;
  }
  throw Error("Container: missing array " + name);
}

bool Container::has_array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return true;
  }
  return false;
}

void write_container(const std::string& path, const Container& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_container: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, c.format_version);
  write_u32(out, static_cast<uint32_t>(c.kind.size()));
  out.write(c.kind.data(), static_cast<std::streamsize>(c.kind.size()));
  const std::string meta = c.meta.dump();  // sorted keys: canonical bytes
  write_u64(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u64(out, c.arrays.size());
  for (const auto& [name, data] : c.arrays) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, data.size());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw Error("write_container: short write to " + path);
}

Container read_container(const std::string& path,
                         const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_container: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("read_container: bad magic in " + path);
  Container c;
  c.format_version = read_u32(in);
  if (c.format_version != 1)
    throw Error("read_container: unsupported format version in " + path);
  std::string kind(read_u32(in), '\0');
  in.read(kind.data(), static_cast<std::streamsize>(kind.size()));
  c.kind = kind;
  if (!expected_kind.empty() && c.kind != expected_kind)
    throw Error("read_container: expected kind " + expected_kind + ", got " +
                c.kind + " in " + path);
  std::string meta(read_u64(in), '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  c.meta = nlohmann::json::parse(meta);
  const uint64_t n_arrays = read_u64(in);
  for (uint64_t i = 0; i < n_arrays; ++i) {
    std::string name(read_u32(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<double> data(read_u64(in));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    c.arrays.emplace_back(std::move(name), std::move(data));
  }
  if (!in) throw Error("read_container: truncated file " + path);
  return c;
}

void save_checkpoint(const std::string& path, const ModelState& model,
                     const TrainState* train, const nlohmann::json& extra_meta) {
  Container c;
  c.kind = "checkpoint";
  c.meta["format_version"] = 1;
  c.meta["model_config"] = model.cfg.to_json();
  if (train != nullptr) {
    c.meta["train"] = {{"step", train->step},
                       {"epoch", train->epoch},
                       {"rng_state", train->rng_state}};
  }
  if (!extra_meta.is_null() && !extra_meta.empty()) c.meta["extra"] = extra_meta;

  // Named flat parameter arrays in registry order before mask arrays.
  for (const ParamInfo& info : model.reg.entries()) {
    c.arrays.emplace_back(
        "param." + info.name,
        std::vector<double>(model.params.begin() + static_cast<long>(info.offset),
                            model.params.begin() +
                                static_cast<long>(info.offset + info.size)));
  }
  for (const std::string& layer : model.mask_order)
    c.arrays.emplace_back("mask." + layer, model.mask(layer));
  for (const auto& [layer, record] : model.regrowth_record)
    c.arrays.emplace_back("record." + layer, record);
  if (train != nullptr) {
    c.arrays.emplace_back("opt.m", train->adam_m);
    c.arrays.emplace_back("opt.v", train->adam_v);
  }
  write_container(path, c);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path, "checkpoint");
  LoadedCheckpoint out;
  const ModelConfig cfg = ModelConfig::from_json(c.meta.at("model_config"));
  out.model = build_model(cfg);
  for (const ParamInfo& info : out.model.reg.entries()) {
    const auto& a = c.array("param." + info.name);
    if (a.size() != info.size)
      throw Error("load_checkpoint: size mismatch for " + info.name);
    std::copy(a.begin(), a.end(),
              out.model.params.begin() + static_cast<long>(info.offset));
  }
  for (const std::string& layer : out.model.mask_order) {
    const auto& a = c.array("mask." + layer);
    if (a.size() != out.model.mask(layer).size())
      throw Error("load_checkpoint: mask size mismatch for " + layer);
    out.model.mask(layer) = a;
  }
  for (const auto& [name, data] : c.arrays) {
    if (name.rfind("record.", 0) == 0)
      out.model.regrowth_record[name.substr(7)] = data;
  }
  if (c.meta.contains("train")) {
    out.has_train = true;
    out.train.step = c.meta["train"].at("step").get<int64_t>();
    out.train.epoch = c.meta["train"].at("epoch").get<int>();
    out.train.rng_state = c.meta["train"].at("rng_state").get<std::string>();
    out.train.adam_m = c.array("opt.m");
    out.train.adam_v = c.array("opt.v");
  }
  out.meta = c.meta;
  return out;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file_hash: cannot open " + path);
  uint64_t h = 14695981039346656037ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return to_hex64(h);
}

}  // namespace htru
