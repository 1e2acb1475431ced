#pragma once

#include <stdexcept>
#include <string>

namespace lgnn {

// Base for every failure the library raises on purpose. The CLI maps
// subclasses onto exit codes (usage=2, data=3, numeric=4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Input value outside an operation's domain (e.g. log1p of x <= -1).
struct DomainError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (ingestion, vocabularies, graphs).
struct DataError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values or a diverging computation.
struct NumericError : Error {
  using Error::Error;
};

// Operation not supported by the current configuration (e.g. attention
// export on a non-GAT model).
struct CapabilityError : Error {
  using Error::Error;
};

// Metric undefined on the given inputs (single-class labels, constant y).
struct MetricError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace lgnn
