#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "htru/model.hpp"

namespace htru {

// Versioned binary container: magic, format version, kind tag, canonical
// JSON metadata, then named double arrays in write order. Little-endian.
// save -> load -> save reproduces identical bytes.
struct Container {
  uint32_t format_version = 1;
  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path,
                         const std::string& expected_kind = "");

// Optimizer/training state carried inside checkpoints so that a resumed
// run continues bit-identically.
struct TrainState {
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  int64_t step = 0;
  int epoch = 0;
  std::string rng_state;  // serialized mt19937_64 for the data order
};

void save_checkpoint(const std::string& path, const ModelState& model,
                     const TrainState* train = nullptr,
                     const nlohmann::json& extra_meta = {});

struct LoadedCheckpoint {
  ModelState model;
  TrainState train;
  bool has_train = false;
  nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a of the file bytes; used as checkpoint provenance in reports.
std::string file_hash(const std::string& path);

}  // namespace htru
