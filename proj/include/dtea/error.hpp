// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dtea {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or counts that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Values outside the domain an operation is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

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

// Non-finite values or a failed numerical check.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Backward requested without the forward intermediates it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace dtea
