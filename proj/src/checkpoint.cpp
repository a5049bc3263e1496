#include "toba/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "toba/common.hpp"

namespace toba::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::float32 : DType::float64;
}

std::size_t dtype_size(DType d) { return d == DType::float32 ? 4 : 8; }

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is, const std::string& path) {
  U v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError(path + ": truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& is, std::uint64_t n, const std::string& path) {
  if (n > (1ULL << 40)) throw IoError(path + ": implausible length in checkpoint");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n)))
    throw IoError(path + ": truncated checkpoint");
  return s;
}

}  // namespace

const Section* Container::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

template <typename T>
Section make_section(const std::string& name, const Matrix<T>& m) {
  Section s;
  s.name = name;
  s.dtype = dtype_of<T>();
  s.dims = {m.rows(), m.cols()};
  s.bytes.resize(m.size() * sizeof(T));
  if (!m.empty()) std::memcpy(s.bytes.data(), m.data(), s.bytes.size());
  return s;
}

template <typename T>
void read_section(const Section& s, Matrix<T>& out) {
  if (s.dtype != dtype_of<T>())
    throw ShapeError("checkpoint section " + s.name + ": dtype mismatch");
  if (s.dims.size() != 2 || s.dims[0] != out.rows() || s.dims[1] != out.cols())
    throw ShapeError("checkpoint section " + s.name + ": shape mismatch");
  if (s.bytes.size() != out.size() * sizeof(T))
    throw ShapeError("checkpoint section " + s.name + ": size mismatch");
  if (!out.empty()) std::memcpy(out.data(), s.bytes.data(), s.bytes.size());
}

void write_file(const std::string& path, const Container& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp + " for writing");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kVersion);
    const std::string meta = c.meta.dump();
    put<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.sections.size()));
    for (const auto& s : c.sections) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
      os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
      put<std::uint8_t>(os, static_cast<std::uint8_t>(s.dtype));
      put<std::uint8_t>(os, static_cast<std::uint8_t>(s.dims.size()));
      for (auto d : s.dims) put<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(s.bytes.data()),
               static_cast<std::streamsize>(s.bytes.size()));
    }
    os.flush();
    if (!os) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move " + tmp + " to " + path);
}

Container read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(path + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  Container c;
  const auto meta_len = get<std::uint64_t>(is, path);
  try {
    c.meta = json::parse(get_bytes(is, meta_len, path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": bad checkpoint metadata: " + e.what());
  }
  const auto n = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n; ++i) {
    Section s;
    s.name = get_bytes(is, get<std::uint32_t>(is, path), path);
    const auto dt = get<std::uint8_t>(is, path);
    if (dt > 1) throw IoError(path + ": unknown dtype in section " + s.name);
    s.dtype = static_cast<DType>(dt);
    const auto ndim = get<std::uint8_t>(is, path);
    std::uint64_t count = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      s.dims.push_back(get<std::uint64_t>(is, path));
      count *= s.dims.back();
    }
    const auto raw = get_bytes(is, count * dtype_size(s.dtype), path);
    s.bytes.assign(raw.begin(), raw.end());
    c.sections.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw IoError(path + ": trailing bytes after the last section");
  return c;
}

template Section make_section<float>(const std::string&, const Matrix<float>&);
template Section make_section<double>(const std::string&, const Matrix<double>&);
template void read_section<float>(const Section&, Matrix<float>&);
template void read_section<double>(const Section&, Matrix<double>&);

}  // namespace toba::ckpt
