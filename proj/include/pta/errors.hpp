#pragma once

#include <stdexcept>
#include <string>

namespace pta {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };

class GenerationError : public Error { using Error::Error; };
class PathError : public Error { using Error::Error; };
class OracleError : public Error { using Error::Error; };
class InstructionError : public Error { using Error::Error; };

// Surfaced by the CLI with distinct exit codes.
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace pta
