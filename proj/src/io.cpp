#include "fcn/io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fcn {

namespace {

constexpr uint32_t kTensorVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;
// Element-count cap so corrupt dims fail cleanly instead of allocating wild.
constexpr uint64_t kMaxElems = uint64_t(1) << 31;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

std::vector<uint8_t> read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_all(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (!f) throw DataError("short write to " + path);
}

}  // namespace

void append_tensor_bytes(std::vector<uint8_t>& out, const Tensor& t) {
  out.push_back('F');
  out.push_back('C');
  out.push_back('N');
  out.push_back('T');
  put_u32(out, kTensorVersion);
  put_u32(out, 4);
  for (int d : t.dims) put_u32(out, uint32_t(d));
  size_t base = out.size();
  out.resize(base + t.data.size() * 4);
  static_assert(sizeof(float) == 4);
  std::memcpy(out.data() + base, t.data.data(), t.data.size() * 4);
}

Tensor parse_tensor_bytes(const uint8_t* p, size_t len, size_t& off,
                          const std::string& what) {
  if (len - off < 12) throw ParseError(what + ": truncated tensor header");
  if (std::memcmp(p + off, "FCNT", 4) != 0)
    throw ParseError(what + ": bad magic, expected FCNT");
  uint32_t version = get_u32(p + off + 4);
  if (version != kTensorVersion)
    throw ParseError(what + ": unsupported tensor version " + std::to_string(version));
  uint32_t ndim = get_u32(p + off + 8);
  if (ndim != 4)
    throw ParseError(what + ": expected 4 dims, got " + std::to_string(ndim));
  off += 12;
  if (len - off < 16) throw ParseError(what + ": truncated dims");
  uint64_t count = 1;
  std::array<int, 4> dims;
  for (int i = 0; i < 4; ++i) {
    uint32_t d = get_u32(p + off);
    off += 4;
    if (d == 0) throw ParseError(what + ": zero extent in dim " + std::to_string(i));
    count *= d;
    if (count > kMaxElems)
      throw ParseError(what + ": dim product overflows sane limits");
    dims[i] = int(d);
  }
  if (len - off < count * 4) throw ParseError(what + ": truncated payload");
  Tensor t(dims[0], dims[1], dims[2], dims[3]);
  std::memcpy(t.data.data(), p + off, count * 4);
  off += count * 4;
  return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
  std::vector<uint8_t> bytes;
  append_tensor_bytes(bytes, t);
  write_all(path, bytes);
}

Tensor read_tensor(const std::string& path) {
  std::vector<uint8_t> bytes = read_all(path);
  size_t off = 0;
  Tensor t = parse_tensor_bytes(bytes.data(), bytes.size(), off, path);
  if (off != bytes.size())
    throw ParseError(path + ": trailing bytes after tensor payload");
  return t;
}

void write_checkpoint(const std::string& path, const Checkpoint& entries) {
  std::vector<uint8_t> bytes;
  bytes.push_back('F');
  bytes.push_back('C');
  bytes.push_back('N');
  bytes.push_back('Z');
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, uint32_t(entries.size()));
  // std::map iterates name-sorted, which is the on-disk order.
  for (const auto& [name, tensor] : entries) {
    if (name.empty() || name.size() > 0xffff)
      throw DataError("checkpoint entry name length out of range: " + name);
    put_u16(bytes, uint16_t(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    append_tensor_bytes(bytes, tensor);
  }
  write_all(path, bytes);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = read_all(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "FCNZ", 4) != 0)
    throw ParseError(path + ": bad magic, expected FCNZ");
  uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  uint32_t count = get_u32(bytes.data() + 8);
  size_t off = 12;
  Checkpoint out;
  std::string prev;
  for (uint32_t i = 0; i < count; ++i) {
    if (bytes.size() - off < 2) throw ParseError(path + ": truncated entry header");
    uint16_t name_len = get_u16(bytes.data() + off);
    off += 2;
    if (bytes.size() - off < name_len) throw ParseError(path + ": truncated entry name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
    off += name_len;
    if (i > 0 && !(prev < name))
      throw ParseError(path + ": entries not sorted or duplicated at " + name);
    prev = name;
    out.emplace(name, parse_tensor_bytes(bytes.data(), bytes.size(), off,
                                         path + ":" + name));
  }
  if (off != bytes.size()) throw ParseError(path + ": trailing bytes after entries");
  return out;
}

void write_pgm(const std::string& path, const LabelMap& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << "P5\n" << m.w << " " << m.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(m.data.data()), std::streamsize(m.data.size()));
  if (!f) throw DataError("short write to " + path);
}

namespace {

// PGM header tokens may be separated by whitespace and '#' comments.
int next_pgm_int(const std::vector<uint8_t>& b, size_t& off, const std::string& path) {
  while (off < b.size()) {
    if (std::isspace(b[off])) {
      ++off;
    } else if (b[off] == '#') {
      while (off < b.size() && b[off] != '\n') ++off;
    } else {
      break;
    }
  }
  if (off >= b.size() || !std::isdigit(b[off]))
    throw ParseError(path + ": malformed PGM header");
  int v = 0;
  while (off < b.size() && std::isdigit(b[off])) {
    v = v * 10 + (b[off] - '0');
    if (v > 1 << 20) throw ParseError(path + ": PGM header value out of range");
    ++off;
  }
  return v;
}

}  // namespace

LabelMap read_pgm(const std::string& path) {
  std::vector<uint8_t> bytes = read_all(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw ParseError(path + ": not a binary PGM (P5)");
  size_t off = 2;
  int w = next_pgm_int(bytes, off, path);
  int h = next_pgm_int(bytes, off, path);
  int maxval = next_pgm_int(bytes, off, path);
  if (maxval != 255)
    throw ParseError(path + ": label PGMs require maxval 255, got " + std::to_string(maxval));
  if (off >= bytes.size() || !std::isspace(bytes[off]))
    throw ParseError(path + ": malformed PGM header");
  ++off;  // single whitespace byte before the raster
  if (w <= 0 || h <= 0) throw ParseError(path + ": bad PGM extents");
  size_t need = size_t(w) * h;
  if (bytes.size() - off < need) throw ParseError(path + ": truncated PGM raster");
  LabelMap m(h, w);
  std::memcpy(m.data.data(), bytes.data() + off, need);
  return m;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir + " is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string name = e.path().filename().string();
    if (name.size() >= ext.size() &&
        name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fcn
