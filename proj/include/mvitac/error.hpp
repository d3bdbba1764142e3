// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvitac {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid extents, non-conformable operands or a non-scalar loss.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// backward() on a tensor that was not produced through a tape.
class GraphError : public Error {
 public:
  using Error::Error;
};

// A row whose norm fell below the normalization floor (collapsed representation).
class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

// Contract violations on loss inputs (too few negatives, non-unit rows).
class LossContractError : public Error {
 public:
  using Error::Error;
};

class ProbeFailureError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { corrupt, unsupported_version, io };

  CheckpointError(Kind kind, const std::string& what, std::uint64_t offset = 0)
      : Error(what), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

class DatasetFormatError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class DivergedTrainingError : public Error {
 public:
  DivergedTrainingError(const std::string& what, std::string last_good_checkpoint = {})
      : Error(what), last_good_(std::move(last_good_checkpoint)) {}

  const std::string& last_good_checkpoint() const noexcept { return last_good_; }

 private:
  std::string last_good_;
};

}  // namespace mvitac
