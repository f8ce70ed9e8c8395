#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "graphpde/optim.hpp"
#include "graphpde/tensor.hpp"

namespace gpde {

// Binary record container shared by checkpoints and dataset sample files.
//
// Layout: magic "PDF2", version u32, then records until EOF. Each record is
//   name_len u32 | name bytes (UTF-8) | dtype u8 | rank u32 |
//   dims u32 x rank | payload (little-endian, row-major)
enum class Dtype : uint8_t { f32 = 0, f64 = 1, u8 = 2, i64 = 3 };

size_t dtype_size(Dtype d);

struct Record {
  Dtype dtype = Dtype::f32;
  std::vector<int64_t> dims;
  std::vector<unsigned char> payload;

  int64_t numel() const { return Tensor::numel_of(dims); }
  Tensor as_tensor() const;             // f32/f64 payloads widen to double
  std::string as_text() const;          // u8 payload
  std::vector<int64_t> as_i64() const;  // i64 payload
};

class RecordWriter {
public:
  explicit RecordWriter(const std::string& path);
  void put_tensor(const std::string& name, const Tensor& t, Dtype as);
  void put_text(const std::string& name, const std::string& text);
  void put_i64(const std::string& name, const std::vector<int64_t>& v);
  void put_f32(const std::string& name, const std::vector<int64_t>& dims,
               const std::vector<float>& v);
  void close();  // flushes; error if the stream failed

private:
  void put(const std::string& name, Dtype d, const std::vector<int64_t>& dims,
           const void* data, size_t bytes);
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Loads every record into memory, preserving file order.
std::vector<std::pair<std::string, Record>> read_records(const std::string& path);
std::map<std::string, Record> read_record_map(const std::string& path);

// Model/optimizer checkpoints on top of the record container. `meta` entries
// are stored as a "__meta__" text record of key=value lines.
void save_checkpoint(const std::string& path, const ParamMap& params, Dtype as,
                     const std::map<std::string, std::string>& meta = {});
ParamMap load_checkpoint(const std::string& path,
                         std::map<std::string, std::string>* meta = nullptr);

uint32_t crc32(const unsigned char* data, size_t n, uint32_t seed = 0);
uint32_t file_crc32(const std::string& path);

}  // namespace gpde
