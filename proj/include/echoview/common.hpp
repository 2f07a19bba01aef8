#pragma once

#include <stdexcept>
#include <string>

namespace echoview {

// Error categories; the CLI maps these onto distinct exit codes.
enum class Errc {
  bad_argument,          // precondition violation (ranges, empty sets, ...)
  shape_mismatch,        // tensor/layer shape disagreement
  io_missing,            // input file does not exist
  io_error,              // read/write failure
  bad_format,            // unparsable or truncated file
  checksum_mismatch,     // payload checksum does not match trailer
  fingerprint_mismatch,  // weight file built for a different architecture
  numeric_error,         // NaN/Inf where finiteness is required
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_argument: return "bad_argument";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::io_missing: return "io_missing";
    case Errc::io_error: return "io_error";
    case Errc::bad_format: return "bad_format";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::fingerprint_mismatch: return "fingerprint_mismatch";
    case Errc::numeric_error: return "numeric_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace echoview
