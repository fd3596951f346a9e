#include "samadapter/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "samadapter/error.hpp"

namespace samadapter {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'M', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put_le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  void put_f32(float f) { put_le(std::bit_cast<std::uint32_t>(f)); }
  void put_f64(double d) { put_le(std::bit_cast<std::uint64_t>(d)); }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(origin_, "corrupt tensor archive (" + what + ")"); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated");
  }
  std::span<const unsigned char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void TensorArchive::put(const std::string& name, const Shape& shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw ValidationError("tensor " + name + ": shape " + shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  }
  tensors_[name] = ArchiveTensor{shape, dtype, std::vector<double>(values.begin(), values.end())};
}

void TensorArchive::put(const Param& param, DType dtype) {
  put(param.name, param.shape, std::span<const double>(param.value.data(), param.numel()), dtype);
}

const ArchiveTensor& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("tensor not found in archive: " + name, {name});
  return it->second;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::vector<unsigned char> TensorArchive::serialize() const {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put_le<std::uint32_t>(kVersion);
  w.put_le<std::uint32_t>(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.put_le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put_le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.put_le<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put_le<std::uint32_t>(d);
    for (double v : t.values) {
      if (t.dtype == DType::f32) w.put_f32(static_cast<float>(v));
      else w.put_f64(v);
    }
  }
  w.put_le<std::uint64_t>(metadata.size());
  w.put_bytes(metadata.data(), metadata.size());
  w.put_le<std::uint64_t>(fnv1a(w.out));
  return std::move(w.out);
}

TensorArchive TensorArchive::deserialize(std::span<const unsigned char> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.get_string(4) != std::string(kMagic, 4)) r.fail("bad magic");
  if (r.get_le<std::uint32_t>() != kVersion) r.fail("unsupported version");
  const auto count = r.get_le<std::uint32_t>();
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get_le<std::uint32_t>();
    if (name_len > r.remaining()) r.fail("bad name length");
    std::string name = r.get_string(name_len);
    const auto dtype_raw = r.get_le<std::uint8_t>();
    if (dtype_raw > 1) r.fail("bad dtype for " + name);
    const auto rank = r.get_le<std::uint32_t>();
    if (rank > 8) r.fail("bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.get_le<std::uint32_t>();
    const auto dtype = static_cast<DType>(dtype_raw);
    const std::size_t n = shape_numel(shape);
    const std::size_t width = dtype == DType::f32 ? 4 : 8;
    if (n > r.remaining() / width) r.fail("tensor " + name + " exceeds file size");
    std::vector<double> values(n);
    for (auto& v : values) v = dtype == DType::f32 ? static_cast<double>(r.get_f32()) : r.get_f64();
    archive.tensors_[name] = ArchiveTensor{std::move(shape), dtype, std::move(values)};
  }
  const auto meta_len = r.get_le<std::uint64_t>();
  if (meta_len > r.remaining()) r.fail("bad metadata length");
  archive.metadata = r.get_string(static_cast<std::size_t>(meta_len));
  const std::size_t body = r.pos();
  const auto stored = r.get_le<std::uint64_t>();
  if (stored != fnv1a(bytes.first(body))) r.fail("checksum mismatch");
  if (r.remaining() != 0) r.fail("trailing bytes");
  return archive;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open file");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open file for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

void TensorArchive::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError(path.string(), "file not found");
  const auto bytes = read_file_bytes(path);
  return deserialize(bytes, path.string());
}

bool assign_param(Param& param, const ArchiveTensor& tensor) {
  if (tensor.shape != param.shape) return false;
  std::memcpy(param.value.data(), tensor.values.data(), sizeof(double) * tensor.values.size());
  return true;
}

void write_tensor_file(const std::filesystem::path& path, const Shape& shape, std::span<const double> values) {
  if (shape_numel(shape) != values.size()) throw ValidationError("tensor file: shape does not match value count");
  Writer w;
  w.put_le<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.put_le<std::uint32_t>(d);
  for (double v : values) w.put_f32(static_cast<float>(v));
  write_file_bytes(path, w.out);
}

RawTensor read_tensor_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  Reader r(bytes, path.string());
  RawTensor t;
  const auto rank = r.get_le<std::uint32_t>();
  if (rank > 8) r.fail("bad rank");
  t.shape.resize(rank);
  for (auto& d : t.shape) d = r.get_le<std::uint32_t>();
  const std::size_t n = shape_numel(t.shape);
  if (r.remaining() != n * 4) r.fail("size mismatch");
  t.values.resize(n);
  for (auto& v : t.values) v = r.get_f32();
  return t;
}

}  // namespace samadapter
