#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace eftcl {

// Precondition / shape violations. Thrown by every operation whose inputs
// do not satisfy its contract.
class DimError : public std::invalid_argument {
 public:
  explicit DimError(const std::string& msg) : std::invalid_argument(msg) {}
};

// IO and persistence failures (corrupt archive, version mismatch, ...).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline std::string format_loc(const char* file, int line, const std::string& msg) {
  std::ostringstream oss;
  oss << msg << " (" << file << ":" << line << ")";
  return oss.str();
}
}  // namespace detail

}  // namespace eftcl

#define EFTCL_CHECK(cond, msg)                                                  \
  do {                                                                          \
    if (!(cond)) {                                                              \
      std::ostringstream oss_;                                                  \
      oss_ << msg;                                                              \
      throw ::eftcl::DimError(                                                  \
          ::eftcl::detail::format_loc(__FILE__, __LINE__, oss_.str()));         \
    }                                                                           \
  } while (0)

#define EFTCL_IO_CHECK(cond, msg)                                               \
  do {                                                                          \
    if (!(cond)) {                                                              \
      std::ostringstream oss_;                                                  \
      oss_ << msg;                                                              \
      throw ::eftcl::IoError(                                                   \
          ::eftcl::detail::format_loc(__FILE__, __LINE__, oss_.str()));         \
    }                                                                           \
  } while (0)
