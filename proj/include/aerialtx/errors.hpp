#pragma once

#include <stdexcept>
#include <string>

namespace aerialtx {

// Base of every error thrown by the library. Subclasses name the failing
// stage so the CLI can map them to exit codes and messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ChannelError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

// A CLI command needs an artifact produced by another command.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace aerialtx
