#pragma once

#include <stdexcept>
#include <string>

namespace sosrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain (negative time, bad probability).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad ranges, unknown tags, unparsable files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Requested size exceeds an enumeration cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between collaborating objects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Kernel matrix violates sub-distribution constraints.
class KernelError : public Error {
 public:
  KernelError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Time grid unsuitable for the requested operation.
class GridError : public Error {
 public:
  using Error::Error;
};

/// Empty or inconsistent dataset.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model/initial-condition combination the estimator cannot handle.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace sosrec
