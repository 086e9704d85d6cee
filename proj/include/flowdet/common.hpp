#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace flowdet {

/// Process exit codes used by the CLI; library errors carry one of these.
enum class ErrC : int { usage = 1, data = 2, train = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrC code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  ErrC code() const noexcept { return code_; }

 private:
  ErrC code_;
};

struct ParseError : Error {
  explicit ParseError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct RangeError : Error {
  explicit RangeError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct OrderingError : Error {
  explicit OrderingError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct GapError : Error {
  explicit GapError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct InsufficientMarkersError : Error {
  explicit InsufficientMarkersError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct AlignmentError : Error {
  explicit AlignmentError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct InsufficientDataError : Error {
  explicit InsufficientDataError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct ShapeError : Error {
  explicit ShapeError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct IoError : Error {
  explicit IoError(std::string m) : Error(ErrC::data, std::move(m)) {}
};
struct ConfigError : Error {
  explicit ConfigError(std::string m) : Error(ErrC::usage, std::move(m)) {}
};
struct TrainingError : Error {
  explicit TrainingError(std::string m) : Error(ErrC::train, std::move(m)) {}
};
struct ConvergenceError : Error {
  explicit ConvergenceError(std::string m) : Error(ErrC::train, std::move(m)) {}
};

namespace detail {

inline void cat_impl(std::ostringstream&) {}

template <class T, class... Rest>
void cat_impl(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  cat_impl(os, rest...);
}

}  // namespace detail

/// Concatenate streamable values into one string.
template <class... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::cat_impl(os, args...);
  return os.str();
}

}  // namespace flowdet
