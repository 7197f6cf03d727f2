#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/tensor.hpp"

namespace eftcl {

/// FNV-1a 64-bit streaming hash. Used for parameter digests and archive
/// integrity; not cryptographic.
class Digest {
 public:
  void update(const void* bytes, std::size_t n);
  void update_u64(std::uint64_t v);
  void update_string(const std::string& s);
  void update_tensor(const Tensor& t);
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Content digest over (name, rank, dims, raw little-endian data) records in
/// the order given. Callers pass a canonical ordering.
std::uint64_t digest_tensors(const std::vector<NamedTensor>& tensors);

/// Tensor archive (.tsr): magic, record count, then per record the name,
/// element-type tag, shape and raw little-endian doubles; a trailing content
/// digest closes the file. Round-trips are bit-exact.
void write_archive(const std::string& path, const std::vector<NamedTensor>& tensors);

/// Throws IoError on bad magic, truncation, or digest mismatch.
std::vector<NamedTensor> read_archive(const std::string& path);

}  // namespace eftcl
