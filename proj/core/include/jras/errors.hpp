#pragma once

#include <stdexcept>
#include <string>

namespace jras {

// Bad argument or violated precondition at an API boundary.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Data that parsed but breaks an invariant (label range, shapes, schema).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable file.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Retrieval could not produce a guide (e.g. every gallery entry excluded).
class RetrievalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in inputs or in a training objective.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jras
