#pragma once

#include <stdexcept>
#include <string>

namespace phm {

// Bad user-supplied configuration (ranges, missing files, inconsistent options).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Input outside the validated domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// The gas-path model produced a non-physical intermediate quantity.
class ModelRangeError : public std::runtime_error {
 public:
  explicit ModelRangeError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime (divergence, non-finite values, failed factorization).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem/serialization problems for pipeline artifacts.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phm
