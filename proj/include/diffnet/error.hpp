#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace diffnet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files; message carries file and line.
class DataError : public Error {
public:
    using Error::Error;
};

// Run-configuration problems; message names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor shape disagreements (checkpoint vs model, feature dims, ...).
class DimError : public Error {
public:
    using Error::Error;
};

// Non-finite loss during training. `diagnostic` is a dump of the state at the
// failing batch, suitable for writing next to the run outputs.
class TrainAbort : public Error {
public:
    TrainAbort(const std::string& msg, std::string diag)
        : Error(msg), diagnostic(std::move(diag)) {}

    std::string diagnostic;
};

}  // namespace diffnet
