#pragma once

#include <stdexcept>
#include <string>
#include <system_error>

namespace pageleap {

// Base for library-state errors (bad sequencing, overlap, handler misuse).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pool cannot satisfy an allocation or a migration reservation.
class PoolExhausted : public Error {
 public:
  using Error::Error;
};

// Wraps a failed OS call with its errno.
[[noreturn]] inline void throw_errno(const std::string& what, int err) {
  throw std::system_error(err, std::generic_category(), what);
}

}  // namespace pageleap
