#pragma once

#include <stdexcept>
#include <string>

namespace tlv {

// Base of every error raised by the library. The CLI maps subclasses of
// ValidationError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input rejected before any work was done.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A record failed schema validation; carries the offending id and field.
class SchemaError : public ValidationError {
public:
    SchemaError(std::string id, std::string field, const std::string& what)
        : ValidationError("record '" + id + "', field '" + field + "': " + what),
          id_(std::move(id)), field_(std::move(field)) {}

    const std::string& id() const { return id_; }
    const std::string& field() const { return field_; }

private:
    std::string id_;
    std::string field_;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// A precondition on normalized inputs or a frozen-parameter contract was broken.
class ContractError : public Error {
public:
    using Error::Error;
};

class DegenerateDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class JudgeProtocolError : public Error {
public:
    JudgeProtocolError(const std::string& what, std::string raw_reply)
        : Error(what), raw_reply_(std::move(raw_reply)) {}

    const std::string& raw_reply() const { return raw_reply_; }

private:
    std::string raw_reply_;
};

} // namespace tlv
