#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "samadapter/tensor.hpp"

namespace samadapter {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct ArchiveTensor {
  Shape shape;
  DType dtype = DType::f32;
  std::vector<double> values;
};

/// Keyed tensor archive: name -> shape -> row-major little-endian values,
/// followed by an optional JSON metadata block and an FNV-1a trailer.
///
///   "SAMT" u32 version u32 count
///   count x { u32 name_len, name, u8 dtype, u32 rank, u32 dims[rank], data }
///   u64 meta_len, meta bytes, u64 fnv1a(all preceding bytes)
///
/// Entries are written in name order so identical contents give identical
/// bytes.
class TensorArchive {
 public:
  void put(const std::string& name, const Shape& shape, std::span<const double> values, DType dtype = DType::f32);
  void put(const Param& param, DType dtype = DType::f32);

  bool contains(const std::string& name) const { return tensors_.contains(name); }
  const ArchiveTensor& get(const std::string& name) const;
  const std::map<std::string, ArchiveTensor>& tensors() const { return tensors_; }
  std::vector<std::string> names() const;

  std::string metadata;

  std::vector<unsigned char> serialize() const;
  static TensorArchive deserialize(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArchiveTensor> tensors_;
};

/// Copies an archive tensor into a param after checking its shape.
/// Returns false (leaving the param untouched) on shape mismatch.
bool assign_param(Param& param, const ArchiveTensor& tensor);

/// Raw feature dump: u32 rank, u32 dims[rank], then row-major f32, all
/// little-endian.
void write_tensor_file(const std::filesystem::path& path, const Shape& shape, std::span<const double> values);
struct RawTensor {
  Shape shape;
  std::vector<float> values;
};
RawTensor read_tensor_file(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace samadapter
