#pragma once

#include <stdexcept>
#include <string>

namespace pd4ml {

// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller violated an operation precondition (batch of 1 in train mode, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Argument outside the mathematical domain of the operation (log of x <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite value produced during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A raw data record that violates its documented layout.
class MalformedRecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic, version, truncation or footer digest in a PD4ML-BIN file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A downloaded or cached file whose MD5 does not match its descriptor.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FetchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pd4ml
