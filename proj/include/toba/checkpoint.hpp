#pragma once

// Binary checkpoint container (layout in docs/checkpoint_format.md):
//
//   "TOBACKPT" | u32 version | u64 meta_len | meta JSON | u32 n_sections |
//   sections...
//   section: u32 name_len | name | u8 dtype | u8 ndim | u64 dims[ndim] | data
//
// All integers and floats little-endian. dtype 0 = float32, 1 = float64.

#include <cstdint>
#include <string>
#include <vector>

#include "toba/config_io.hpp"
#include "toba/tensor.hpp"

namespace toba::ckpt {

inline constexpr char kMagic[8] = {'T', 'O', 'B', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { float32 = 0, float64 = 1 };

struct Section {
  std::string name;
  DType dtype = DType::float64;
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> bytes;
};

struct Container {
  json meta;
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
};

template <typename T>
Section make_section(const std::string& name, const Matrix<T>& m);

// Throws ShapeError if the dims or dtype disagree with `out`.
template <typename T>
void read_section(const Section& s, Matrix<T>& out);

// Throws IoError.
void write_file(const std::string& path, const Container& c);
// Throws IoError on unreadable or malformed files.
Container read_file(const std::string& path);

}  // namespace toba::ckpt
