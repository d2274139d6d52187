#pragma once

#include <stdexcept>
#include <string>

namespace sq8 {

// Invalid parameters, width mismatches, headroom failures detected before any
// communication happens.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  TransportError(int peer, const std::string& what)
      : std::runtime_error("peer " + std::to_string(peer) + ": " + what), peer_(peer) {}

  int peer() const noexcept { return peer_; }

 private:
  int peer_;
};

class FramingError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Debug aid: adjacent parties disagree on a replicated component.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedMultiplierError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Model loading diagnostics.
class ModelFormatError : public ConfigError {  // magic, version, truncated data
 public:
  using ConfigError::ConfigError;
};

class TopologyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class HeadroomError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class BiasScaleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace sq8
