#pragma once

#include <stdexcept>
#include <string>

namespace bsc {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and print a one-line diagnostic.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct GenerationError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

template <typename E>
inline void require_or(bool cond, const std::string& msg) {
  if (!cond) throw E(msg);
}

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bsc
