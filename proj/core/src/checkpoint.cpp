#include "graphpde/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace gpde {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'F', '2'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::u8: return 1;
    case Dtype::i64: return 8;
  }
  throw std::runtime_error("unknown dtype");
}

Tensor Record::as_tensor() const {
  Tensor t(dims);
  const int64_t n = t.numel();
  if (dtype == Dtype::f32) {
    const float* p = reinterpret_cast<const float*>(payload.data());
    for (int64_t i = 0; i < n; ++i) t[i] = double(p[i]);
  } else if (dtype == Dtype::f64) {
    std::memcpy(t.data.data(), payload.data(), size_t(n) * 8);
  } else {
    throw std::runtime_error("record is not a float tensor");
  }
  return t;
}

std::string Record::as_text() const {
  if (dtype != Dtype::u8) throw std::runtime_error("record is not text");
  return std::string(payload.begin(), payload.end());
}

std::vector<int64_t> Record::as_i64() const {
  if (dtype != Dtype::i64) throw std::runtime_error("record is not i64");
  std::vector<int64_t> v(static_cast<size_t>(numel()));
  std::memcpy(v.data(), payload.data(), payload.size());
  return v;
}

struct RecordWriter::Impl {
  std::ofstream os;
  std::string path;
};

RecordWriter::RecordWriter(const std::string& path)
    : impl_(std::make_shared<Impl>()) {
  impl_->path = path;
  impl_->os.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->os) throw std::runtime_error("cannot open for write: " + path);
  impl_->os.write(kMagic, 4);
  write_u32(impl_->os, kVersion);
}

void RecordWriter::put(const std::string& name, Dtype d,
                       const std::vector<int64_t>& dims, const void* data,
                       size_t bytes) {
  std::ostream& os = impl_->os;
  write_u32(os, uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  const unsigned char dt = static_cast<unsigned char>(d);
  os.write(reinterpret_cast<const char*>(&dt), 1);
  write_u32(os, uint32_t(dims.size()));
  for (int64_t dim : dims) write_u32(os, uint32_t(dim));
  os.write(reinterpret_cast<const char*>(data), std::streamsize(bytes));
}

void RecordWriter::put_tensor(const std::string& name, const Tensor& t,
                              Dtype as) {
  if (as == Dtype::f64) {
    put(name, as, t.shape, t.data.data(), t.data.size() * 8);
  } else if (as == Dtype::f32) {
    std::vector<float> f(t.data.size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = float(t.data[i]);
    put(name, as, t.shape, f.data(), f.size() * 4);
  } else {
    throw std::runtime_error("put_tensor: dtype must be f32 or f64");
  }
}

void RecordWriter::put_text(const std::string& name, const std::string& text) {
  put(name, Dtype::u8, {int64_t(text.size())}, text.data(), text.size());
}

void RecordWriter::put_i64(const std::string& name,
                           const std::vector<int64_t>& v) {
  put(name, Dtype::i64, {int64_t(v.size())}, v.data(), v.size() * 8);
}

void RecordWriter::put_f32(const std::string& name,
                           const std::vector<int64_t>& dims,
                           const std::vector<float>& v) {
  if (Tensor::numel_of(dims) != int64_t(v.size()))
    throw std::runtime_error("put_f32: dims/payload mismatch");
  put(name, Dtype::f32, dims, v.data(), v.size() * 4);
}

void RecordWriter::close() {
  impl_->os.flush();
  if (!impl_->os) throw std::runtime_error("write failed: " + impl_->path);
  impl_->os.close();
}

std::vector<std::pair<std::string, Record>> read_records(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported version in " + path);
  std::vector<std::pair<std::string, Record>> out;
  while (true) {
    unsigned char hdr[4];
    is.read(reinterpret_cast<char*>(hdr), 4);
    if (is.gcount() == 0) break;  // clean end of file
    if (is.gcount() < 4)
      throw std::runtime_error("truncated record header in " + path);
    const uint32_t name_len = uint32_t(hdr[0]) | uint32_t(hdr[1]) << 8 |
                              uint32_t(hdr[2]) << 16 | uint32_t(hdr[3]) << 24;
    if (name_len > 4096)
      throw std::runtime_error("implausible record name in " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Record r;
    unsigned char dt;
    is.read(reinterpret_cast<char*>(&dt), 1);
    if (dt > uint8_t(Dtype::i64)) throw std::runtime_error("bad dtype in " + path);
    r.dtype = Dtype(dt);
    const uint32_t rank = read_u32(is);
    if (rank > 8) throw std::runtime_error("bad rank in " + path);
    r.dims.resize(rank);
    for (uint32_t i = 0; i < rank; ++i) r.dims[i] = int64_t(read_u32(is));
    const size_t bytes = size_t(r.numel()) * dtype_size(r.dtype);
    r.payload.resize(bytes);
    is.read(reinterpret_cast<char*>(r.payload.data()), std::streamsize(bytes));
    if (!is) throw std::runtime_error("truncated payload in " + path);
    out.emplace_back(std::move(name), std::move(r));
  }
  return out;
}

std::map<std::string, Record> read_record_map(const std::string& path) {
  std::map<std::string, Record> m;
  for (auto& [name, rec] : read_records(path)) m[name] = std::move(rec);
  return m;
}

void save_checkpoint(const std::string& path, const ParamMap& params, Dtype as,
                     const std::map<std::string, std::string>& meta) {
  RecordWriter w(path);
  if (!meta.empty()) {
    std::string blob;
    for (const auto& [k, v] : meta) blob += k + "=" + v + "\n";
    w.put_text("__meta__", blob);
  }
  for (const auto& [name, t] : params) w.put_tensor(name, t, as);
  w.close();
}

ParamMap load_checkpoint(const std::string& path,
                         std::map<std::string, std::string>* meta) {
  ParamMap out;
  for (auto& [name, rec] : read_records(path)) {
    if (name == "__meta__") {
      if (meta) {
        const std::string blob = rec.as_text();
        size_t pos = 0;
        while (pos < blob.size()) {
          const size_t nl = blob.find('\n', pos);
          const std::string line = blob.substr(pos, nl - pos);
          const size_t eq = line.find('=');
          if (eq != std::string::npos)
            (*meta)[line.substr(0, eq)] = line.substr(eq + 1);
          if (nl == std::string::npos) break;
          pos = nl + 1;
        }
      }
      continue;
    }
    out[name] = rec.as_tensor();
  }
  return out;
}

uint32_t crc32(const unsigned char* data, size_t n, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xffffffffu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

uint32_t file_crc32(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  uint32_t c = 0;
  std::vector<unsigned char> buf(1 << 16);
  while (is) {
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    const std::streamsize got = is.gcount();
    if (got > 0) c = crc32(buf.data(), size_t(got), c);
  }
  return c;
}

}  // namespace gpde
