#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skimread {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A class index or lookup is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// An operation received an empty sequence it cannot handle.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Treebank text could not be parsed; carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error(message + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

/// A data file has the wrong layout (e.g. wrong vector dimension on a line).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Two sequences that must be aligned have different lengths.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or otherwise failed; message names the epoch.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint format version is not supported.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint bytes fail the checksum or are truncated.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A curve has too few points to integrate.
class DegenerateCurveError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed; carries the stage name.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage_name, const std::string& message)
      : Error("stage '" + stage_name + "': " + message),
        stage(std::move(stage_name)) {}
  std::string stage;
};

}  // namespace skimread
