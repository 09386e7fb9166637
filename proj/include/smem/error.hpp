#pragma once

#include <stdexcept>
#include <string>

namespace smem {

// Error taxonomy used across the library. The kind decides the CLI exit
// path: usage errors exit 1, everything else surfaces as a failure message.
enum class ErrorKind {
  kDimension,      // shape mismatch between operands
  kUsage,          // caller broke a precondition
  kData,           // bad record content (answer class out of range, ...)
  kFormat,         // malformed file (magic/version/truncation)
  kNumeric,        // non-finite value where finite is required
  kEmptyQuestion,  // no real tokens survive encoding/masking
  kIo,             // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace smem
