#pragma once

#include <stdexcept>
#include <string>

namespace toruslab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Map parameters violate the unimodular/hyperbolic or contraction invariants.
class InvalidMap : public Error {
public:
    using Error::Error;
};

class IterationDivergence : public Error {
public:
    using Error::Error;
};

class FamilyMismatch : public Error {
public:
    using Error::Error;
};

class DegenerateCocycle : public Error {
public:
    using Error::Error;
};

/// Too few uncensored rows to regress a rate.
class InsufficientData : public Error {
public:
    using Error::Error;
};

class ConstructionInvalid : public Error {
public:
    using Error::Error;
};

class LocationFailure : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

/// Configuration failed validation; the message names the offending field.
class ConfigInvalid : public Error {
public:
    ConfigInvalid(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class MissingRecord : public Error {
public:
    using Error::Error;
};

}  // namespace toruslab
