#include "graphpde/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphpde/checkpoint.hpp"

namespace gpde {

namespace {

constexpr int kFormatVersion = 1;

std::string sample_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d.bin", index);
  return buf;
}

std::string family_echo(const DcrFamilyConfig& f) {
  std::ostringstream os;
  os << "J=" << f.max_sin_terms << " source_weights=" << f.source_weights[0]
     << ":" << f.source_weights[1] << ":" << f.source_weights[2] << ":"
     << f.source_weights[3] << " zero_diffusion=" << f.zero_diffusion_prob
     << " log10_a=[" << f.log10_a_min << "," << f.log10_a_max << "]"
     << " R=" << f.resolution << " grf=" << f.grf.amplitude << "/"
     << f.grf.mass << "/" << f.grf.power
     << " linear_fluxes=" << int(f.linear_fluxes_only)
     << " reaction=" << int(f.allow_reaction)
     << " source=" << int(f.allow_source);
  return os.str();
}

void write_sample(const std::string& path, const DatasetSample& s) {
  RecordWriter w(path);
  w.put_text("dsl", s.dsl);
  w.put_i64("seed", {int64_t(s.seed)});
  Tensor times({int64_t(s.times.size())});
  for (size_t i = 0; i < s.times.size(); ++i) times[int64_t(i)] = s.times[i];
  w.put_tensor("times", times, Dtype::f64);

  if (!s.frames.empty()) {
    const int r = s.frames.front().r;
    std::vector<float> flat;
    flat.reserve(s.frames.size() * size_t(r) * r);
    for (const GridField& g : s.frames)
      flat.insert(flat.end(), g.v.begin(), g.v.end());
    w.put_f32("labels", {int64_t(s.frames.size()), r, r}, flat);
  }
  for (const auto& [key, grid] : s.fields)
    w.put_f32("field:" + key, {grid.r, grid.r}, grid.v);
  w.close();
}

DatasetSample read_sample(const std::string& path) {
  DatasetSample s;
  bool saw_labels = false;
  for (const auto& [name, rec] : read_records(path)) {
    if (name == "dsl") {
      s.dsl = rec.as_text();
    } else if (name == "seed") {
      s.seed = uint64_t(rec.as_i64().at(0));
    } else if (name == "times") {
      const Tensor t = rec.as_tensor();
      s.times.assign(t.data.begin(), t.data.end());
    } else if (name == "labels") {
      if (rec.dims.size() != 3 || rec.dims[1] != rec.dims[2])
        throw DatasetError(path + ": labels record wants [frames, R, R]");
      saw_labels = true;
      const int frames = int(rec.dims[0]);
      const int r = int(rec.dims[1]);
      const Tensor t = rec.as_tensor();
      for (int j = 0; j < frames; ++j) {
        GridField g;
        g.r = r;
        g.v.resize(size_t(r) * r);
        for (size_t i = 0; i < g.v.size(); ++i)
          g.v[i] = float(t[int64_t(j * int64_t(r) * r + int64_t(i))]);
        s.frames.push_back(std::move(g));
      }
    } else if (name.rfind("field:", 0) == 0) {
      if (rec.dims.size() != 2 || rec.dims[0] != rec.dims[1])
        throw DatasetError(path + ": field record wants [R, R]");
      GridField g;
      g.r = int(rec.dims[0]);
      const Tensor t = rec.as_tensor();
      g.v.resize(t.data.size());
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = float(t.data[i]);
      s.fields[name.substr(6)] = std::move(g);
    }
  }
  if (s.dsl.empty() || !saw_labels || s.times.size() != s.frames.size())
    throw DatasetError(path + ": incomplete sample record");
  return s;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format: graphpde-dataset\nversion: " << kFormatVersion
           << "\nresolution: " << ds.resolution << "\nconfig: "
           << ds.config_echo << "\ncount: " << ds.samples.size() << "\n";
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const std::string name = sample_filename(int(i));
    const std::string path = dir + "/" + name;
    write_sample(path, ds.samples[i]);
    char line[128];
    std::snprintf(line, sizeof line, "%zu\t%s\t%" PRIu64 "\t%08x\n", i,
                  name.c_str(), ds.samples[i].seed, file_crc32(path));
    manifest << line;
  }
  std::ofstream mf(dir + "/manifest.txt", std::ios::binary);
  mf << manifest.str();
  if (!mf) throw DatasetError("failed to write " + dir + "/manifest.txt");
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt", std::ios::binary);
  if (!mf) throw DatasetError("missing manifest in " + dir);
  Dataset ds;
  std::string line;
  size_t count = 0;
  auto want_prefix = [&](const std::string& prefix) {
    if (!std::getline(mf, line) || line.rfind(prefix, 0) != 0)
      throw DatasetError(dir + ": malformed manifest (missing '" + prefix +
                         "')");
    return line.substr(prefix.size());
  };
  if (want_prefix("format: ") != "graphpde-dataset")
    throw DatasetError(dir + ": not a dataset directory");
  if (std::stoi(want_prefix("version: ")) != kFormatVersion)
    throw DatasetError(dir + ": unsupported dataset version");
  ds.resolution = std::stoi(want_prefix("resolution: "));
  ds.config_echo = want_prefix("config: ");
  count = size_t(std::stoul(want_prefix("count: ")));

  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(mf, line))
      throw DatasetError(dir + ": manifest shorter than its count");
    std::istringstream ls(line);
    size_t idx = 0;
    std::string name;
    uint64_t seed = 0;
    std::string crc_hex;
    if (!(ls >> idx >> name >> seed >> crc_hex) || idx != i)
      throw DatasetError(dir + ": malformed manifest row " + std::to_string(i));
    const std::string path = dir + "/" + name;
    const uint32_t want = uint32_t(std::stoul(crc_hex, nullptr, 16));
    const uint32_t got = file_crc32(path);
    if (got != want)
      throw DatasetError(path + ": checksum mismatch (corrupt payload)");
    DatasetSample s = read_sample(path);
    if (s.seed != seed)
      throw DatasetError(path + ": seed disagrees with the manifest");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

int generate_dataset(const DcrFamilyConfig& family, int count, int nt,
                     uint64_t base_seed, const std::string& dir) {
  Dataset ds;
  ds.resolution = family.resolution;
  ds.config_echo = family_echo(family) + " nt=" + std::to_string(nt);

  int draws = 0;
  while (int(ds.samples.size()) < count) {
    const uint64_t seed = base_seed + uint64_t(draws);
    ++draws;
    Rng rng = Rng::fork(seed, {0xDCF});
    DcrInstance inst = sample_dcr_instance(family, rng);
    const SolveResult sol = solve_dcr(inst, family.resolution, nt);
    if (sol.discarded) continue;
    DatasetSample s;
    s.seed = seed;
    s.dsl = canonical_text(inst.system);
    s.fields = inst.fields;
    s.times = sol.times;
    s.frames = sol.frames;
    ds.samples.push_back(std::move(s));
  }
  write_dataset(ds, dir);
  return draws;
}

}  // namespace gpde
