#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "evk/error.hpp"
#include "evk/tensor.hpp"

static_assert(std::endian::native == std::endian::little, "EVK0 I/O assumes a little-endian host");

namespace evk {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'K', '0'};
constexpr std::uint8_t kDtypeF32 = 0;
// Sanity cap on rank; real tensors here are at most 4-D.
constexpr std::uint32_t kMaxRank = 16;

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw Error(ErrorKind::ParseError, "truncated tensor header");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

void check_finite(std::span<const float> data) {
  for (float v : data)
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "tensor contains a non-finite value");
}

}  // namespace

std::uint64_t checked_element_count(std::span<const std::uint64_t> dims) {
  if (dims.empty()) throw Error(ErrorKind::DimOverflow, "tensor has no dimensions");
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw Error(ErrorKind::DimOverflow, "zero extent");
    if (n > std::numeric_limits<std::uint64_t>::max() / sizeof(float) / d)
      throw Error(ErrorKind::DimOverflow, "element count overflows");
    n *= d;
  }
  return n;
}

TensorBlob::TensorBlob(std::vector<std::uint64_t> d, std::vector<float> values)
    : dims(std::move(d)), data(std::move(values)) {
  if (checked_element_count(dims) != data.size())
    throw Error(ErrorKind::DimMismatch, "tensor data length does not match dims");
}

TensorBlob::TensorBlob(std::vector<std::uint64_t> d) : dims(std::move(d)) {
  data.assign(checked_element_count(dims), 0.0f);
}

std::uint64_t TensorBlob::element_count() const { return checked_element_count(dims); }

std::vector<std::uint8_t> encode_tensor(const TensorBlob& blob) {
  const auto n = checked_element_count(blob.dims);
  if (n != blob.data.size()) throw Error(ErrorKind::DimMismatch, "tensor data length does not match dims");
  check_finite(blob.data);

  std::vector<std::uint8_t> out;
  out.reserve(9 + 8 * blob.dims.size() + 4 * n);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put(out, kDtypeF32);
  put(out, static_cast<std::uint32_t>(blob.dims.size()));
  for (auto d : blob.dims) put(out, d);
  const auto* p = reinterpret_cast<const std::uint8_t*>(blob.data.data());
  out.insert(out.end(), p, p + n * sizeof(float));
  return out;
}

TensorBlob decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic, "not an EVK0 tensor");
  std::size_t pos = 4;
  const auto dtype = take<std::uint8_t>(bytes, pos);
  if (dtype != kDtypeF32) throw Error(ErrorKind::ParseError, "unsupported dtype code " + std::to_string(dtype));
  const auto rank = take<std::uint32_t>(bytes, pos);
  if (rank == 0 || rank > kMaxRank) throw Error(ErrorKind::DimOverflow, "bad tensor rank " + std::to_string(rank));

  TensorBlob blob;
  blob.dims.resize(rank);
  for (auto& d : blob.dims) d = take<std::uint64_t>(bytes, pos);
  const auto n = checked_element_count(blob.dims);
  if ((bytes.size() - pos) / sizeof(float) < n || bytes.size() - pos != n * sizeof(float))
    throw Error(ErrorKind::ParseError, "tensor payload length does not match header");
  blob.data.resize(n);
  std::memcpy(blob.data.data(), bytes.data() + pos, n * sizeof(float));
  check_finite(blob.data);
  return blob;
}

void write_tensor(const std::filesystem::path& path, const TensorBlob& blob) {
  const auto bytes = encode_tensor(blob);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

TensorBlob read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

TensorBlob grid_to_tensor(const VoxelGrid& grid) {
  const auto r = static_cast<std::uint64_t>(grid.resolution());
  std::vector<float> v(grid.bits.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = grid.bits[i] ? 1.0f : 0.0f;
  return TensorBlob({r, r, r}, std::move(v));
}

VoxelGrid grid_from_tensor(const TensorBlob& blob, const Bounds& bounds) {
  if (blob.dims.size() != 3 || blob.dims[0] != blob.dims[1] || blob.dims[1] != blob.dims[2] || blob.dims[0] < 1 ||
      blob.dims[0] > 4096)
    throw Error(ErrorKind::DimMismatch, "occupancy tensor must have dims [R, R, R]");
  VoxelGrid g(VoxelDomain(static_cast<int>(blob.dims[0]), bounds));
  if (blob.data.size() != g.bits.size()) throw Error(ErrorKind::DimMismatch, "occupancy payload size mismatch");
  for (std::size_t i = 0; i < g.bits.size(); ++i) g.bits[i] = blob.data[i] != 0.0f ? 1 : 0;
  return g;
}

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid) { write_tensor(path, grid_to_tensor(grid)); }

VoxelGrid read_grid(const std::filesystem::path& path, const Bounds& bounds) {
  return grid_from_tensor(read_tensor(path), bounds);
}

}  // namespace evk
