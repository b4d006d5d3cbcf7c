#pragma once

#include <stdexcept>
#include <string>

namespace kfuse {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on sizes or shapes was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Non-finite or otherwise unusable input values.
class InputError : public Error {
public:
    using Error::Error;
};

// A function or operator was used with a space it is not bound to.
class BindingError : public Error {
public:
    using Error::Error;
};

// A feature set or fusion basis could not be constructed.
class ConstructionError : public Error {
public:
    using Error::Error;
};

// A matrix expected to be positive semidefinite has a clearly negative eigenvalue.
class NotPositiveError : public Error {
public:
    using Error::Error;
};

// A fusion-space function has no exact expansion in an agent's features.
class NotInAgentSpaceError : public Error {
public:
    using Error::Error;
};

// An identity that holds by construction was observed to fail.
class InternalConsistencyError : public Error {
public:
    using Error::Error;
};

// Wraps a failure with the name of the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace kfuse
