#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graphpde/dcr.hpp"

namespace gpde {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One stored sample: the canonical system text, its numeric bindings, and the
// labeled solution frames.
struct DatasetSample {
  uint64_t seed = 0;
  std::string dsl;                          // canonical specific-form text
  std::map<std::string, GridField> fields;  // resolution-key -> grid
  std::vector<double> times;                // nt+1
  std::vector<GridField> frames;            // nt+1 label grids (variable 0)
};

struct Dataset {
  int resolution = 0;
  std::string config_echo;  // family description stored in the manifest
  std::vector<DatasetSample> samples;
};

// Generate `count` kept samples (seed = base_seed + running index; discarded
// draws advance the index without being emitted) and write them under `dir`:
// a text manifest plus one record file per sample with a CRC recorded in the
// manifest. Returns the number of candidate draws consumed.
int generate_dataset(const DcrFamilyConfig& family, int count, int nt,
                     uint64_t base_seed, const std::string& dir);

void write_dataset(const Dataset& ds, const std::string& dir);

// Verifies the manifest version and every sample checksum.
Dataset read_dataset(const std::string& dir);

}  // namespace gpde
