#ifndef DRUGREC_ERROR_HPP
#define DRUGREC_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drugrec {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. The message always carries both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Numeric argument outside its documented domain (rates, ratios, scores).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Invalid synthetic-cohort parameters.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line where parsing failed
/// (0 when the failure is not tied to a line).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// File format version not understood by this build.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Molecule contains an element outside the model's atom vocabulary.
class UnknownAtomError : public Error {
public:
    using Error::Error;
};

/// Checkpoint and cohort disagree on vocabulary sizes.
class VocabMismatchError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf detected where finite values are required.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Empty cohort or test set where at least one element is required.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Drug id outside [0, |M|).
class IdRangeError : public Error {
public:
    using Error::Error;
};

/// Matrix expected to be symmetric with zero diagonal is not.
class AsymmetryError : public Error {
public:
    using Error::Error;
};

} // namespace drugrec

#endif
