// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace simulseq {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown token string or token id.
class VocabError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between a vector and the network or model it is fed to.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Target prefix already at the global length cap.
class CapError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (schedule/source mismatch, bad corpus, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Transport could not be established or timed out.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

/// Peer violated the wire protocol. `raw()` holds the offending payload.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw = {})
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Server rejected a request because its precondition did not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace simulseq
