#pragma once

#include "vora/real.hpp"

#include <stdexcept>
#include <string>

VORA_BEGIN_NAMESPACE

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/train/run configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Overlapping or out-of-range sequence spans.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or undefined quantities (zero-norm cosine, NaN loss).
/// Maps to CLI exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An object used in a state that forbids the call, e.g. re-merging an
/// adapter or finetuning a merged checkpoint. Maps to CLI exit code 4.
class StateError : public Error {
 public:
  using Error::Error;
};

VORA_END_NAMESPACE
