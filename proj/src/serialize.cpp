#include "eftcl/serialize.hpp"

#include <cstring>
#include <fstream>

namespace eftcl {

namespace {
constexpr char kMagic[8] = {'E', 'F', 'T', 'T', 'S', 'R', '1', '\0'};
constexpr std::uint8_t kTagF64 = 0;

// Little-endian on-disk layout; this code assumes a little-endian host.
template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  EFTCL_IO_CHECK(is.good(), "archive truncated");
  return v;
}
}  // namespace

void Digest::update(const void* bytes, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
}

void Digest::update_u64(std::uint64_t v) { update(&v, sizeof(v)); }

void Digest::update_string(const std::string& s) {
  update_u64(s.size());
  update(s.data(), s.size());
}

void Digest::update_tensor(const Tensor& t) {
  update_u64(static_cast<std::uint64_t>(t.rank()));
  for (std::int64_t d : t.shape) update_u64(static_cast<std::uint64_t>(d));
  update(t.data.data(), t.data.size() * sizeof(double));
}

std::uint64_t digest_tensors(const std::vector<NamedTensor>& tensors) {
  Digest d;
  for (const auto& nt : tensors) {
    d.update_string(nt.name);
    d.update_tensor(nt.tensor);
  }
  return d.value();
}

void write_archive(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  EFTCL_IO_CHECK(os.good(), "cannot open for writing: " << path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(os, tensors.size());
  for (const auto& nt : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put<std::uint8_t>(os, kTagF64);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(nt.tensor.rank()));
    for (std::int64_t d : nt.tensor.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
             static_cast<std::streamsize>(nt.tensor.data.size() * sizeof(double)));
  }
  put<std::uint64_t>(os, digest_tensors(tensors));
  EFTCL_IO_CHECK(os.good(), "write failed: " << path);
}

std::vector<NamedTensor> read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EFTCL_IO_CHECK(is.good(), "cannot open archive: " << path);
  char magic[8];
  is.read(magic, sizeof(magic));
  EFTCL_IO_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
                 "bad archive magic: " << path);
  const std::uint64_t count = get<std::uint64_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    NamedTensor nt;
    const std::uint32_t name_len = get<std::uint32_t>(is);
    nt.name.resize(name_len);
    is.read(nt.name.data(), name_len);
    const std::uint8_t tag = get<std::uint8_t>(is);
    EFTCL_IO_CHECK(tag == kTagF64, "unsupported element type tag " << int(tag));
    const std::uint8_t rank = get<std::uint8_t>(is);
    std::vector<std::int64_t> shape(rank);
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      shape[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(get<std::uint64_t>(is));
      n *= shape[static_cast<std::size_t>(i)];
    }
    nt.tensor.shape = std::move(shape);
    nt.tensor.data.resize(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(nt.tensor.data.data()),
            static_cast<std::streamsize>(nt.tensor.data.size() * sizeof(double)));
    EFTCL_IO_CHECK(is.good(), "archive truncated: " << path);
    out.push_back(std::move(nt));
  }
  const std::uint64_t stored = get<std::uint64_t>(is);
  EFTCL_IO_CHECK(stored == digest_tensors(out), "archive digest mismatch: " << path);
  return out;
}

}  // namespace eftcl
