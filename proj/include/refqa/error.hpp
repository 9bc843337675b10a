// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace refqa {

/// Base class for all refqa errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between tensors, or between data and a
/// declared configuration.
class DimError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data: files, manifests, ids, stores.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or non-finite numeric input (constant vectors, NaN gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration combination rejected at construction time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace refqa
