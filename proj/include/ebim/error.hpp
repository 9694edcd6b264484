#pragma once

#include <stdexcept>
#include <string>

namespace ebim {

// Error classes surfaced to callers; the CLI maps each to its own exit code.
enum class Errc {
  invalid_argument,
  shape_mismatch,
  io,
  format,
  unreachable_kappa,
  zero_mask,
  degenerate,
  not_found,
  conflict,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by the binary file readers; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(Errc::format, what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

const char* errc_name(Errc code) noexcept;

// Process exit status for each error class; 0 is success, 1 an unclassified failure.
inline int exit_code(Errc code) noexcept { return 10 + static_cast<int>(code); }

}  // namespace ebim
