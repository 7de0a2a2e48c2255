#pragma once

#include <stdexcept>
#include <string>

namespace rdv2 {

/// Operand extents disagree with what an operation requires.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value (model, loss, tile, group count, ...) is invalid.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar loss, step out of range, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A checkpoint failed validation; the message names the failed field.
class CorruptFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad command-line usage; the message names the offending flag.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged or had nothing to train on.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rdv2
