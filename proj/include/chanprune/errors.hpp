#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chanprune {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf appeared in a forward or backward pass.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A malformed dataset or checkpoint file. `offset` is the byte offset where
/// parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A prune decision removed every unit of a layer.
class DisconnectionError : public Error {
 public:
  explicit DisconnectionError(std::size_t layer)
      : Error("pruning removes every unit of layer " + std::to_string(layer)), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

}  // namespace chanprune
