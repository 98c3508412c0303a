#include "mga/core/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mga/errors.hpp"

namespace mga::nn {
namespace {

constexpr std::array<char, 8> kMagic{'M', 'G', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw DataError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void put_entry(std::ostream& out, std::uint8_t kind, const std::string& name, const Tensor& t) {
  put<std::uint8_t>(out, kind);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  for (double v : t.values()) put<double>(out, v);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterStore& store) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.params().size() + store.buffers().size()));
  for (const auto& [name, var] : store.params()) {
    put_entry(out, store.is_frozen(name) ? 2 : 0, name, var.value());
  }
  for (const auto& [name, t] : store.buffers()) put_entry(out, 1, name, t);
  if (!out) throw StateError("failed writing checkpoint");
}

ParameterStore read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  ParameterStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = get<std::uint8_t>(in);
    const auto name_len = get<std::uint32_t>(in);
    if (name_len > 4096) throw DataError("checkpoint entry name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("checkpoint truncated");
    const auto rank = get<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw DataError("checkpoint entry " + name + " has invalid rank");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& d : shape) {
      const auto extent = get<std::uint64_t>(in);
      if (extent == 0 || extent > kMaxElements) throw DataError("checkpoint entry " + name + " has invalid extent");
      d = static_cast<std::size_t>(extent);
      elements *= extent;
      if (elements > kMaxElements) throw DataError("checkpoint entry " + name + " too large");
    }
    std::vector<double> values(static_cast<std::size_t>(elements));
    for (auto& v : values) v = get<double>(in);
    Tensor t(std::move(shape), std::move(values));
    switch (kind) {
      case 0:
        store.add(name, std::move(t));
        break;
      case 2:
        store.add(name, std::move(t));
        store.freeze(name);
        break;
      case 1:
        store.add_buffer(name, std::move(t));
        break;
      default:
        throw DataError("checkpoint entry " + name + " has unknown kind");
    }
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, store);
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("missing checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace mga::nn
