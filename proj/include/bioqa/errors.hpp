#pragma once

#include <stdexcept>
#include <string>

namespace bioqa {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// file / schema / config
class IoError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class UnknownQuestionId : public Error { using Error::Error; };

// transport
/// Single-attempt transport failure; `retryable` drives the retry loop.
class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable, int status = 0)
        : Error(what), retryable_(retryable), status_(status) {}
    bool retryable() const { return retryable_; }
    int status() const { return status_; }

private:
    bool retryable_;
    int status_;
};
class TransportExhausted : public Error { using Error::Error; };
class AuthError : public Error { using Error::Error; };
class ScriptMiss : public Error { using Error::Error; };
class QuerySyntaxRejected : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };

// model-output handling
class EmptyCompletion : public Error { using Error::Error; };
class MalformedReply : public Error { using Error::Error; };
class MalformedAnswer : public Error { using Error::Error; };
class Unnormalizable : public Error { using Error::Error; };

// gazetteer / metrics
class MissingColumn : public Error { using Error::Error; };
class EmptyInput : public Error { using Error::Error; };
class KeyMismatch : public Error { using Error::Error; };
class DuplicateDocument : public Error { using Error::Error; };

} // namespace bioqa
