#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace oukit {

/// Base of every error the library throws. `tag()` is a stable short name
/// used when failures are recorded as data (benchmark rows, CLI messages).
class Error : public std::runtime_error {
public:
    Error(std::string tag, const std::string& what)
        : std::runtime_error(what), tag_(std::move(tag)) {}

    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

class InvalidArgument : public Error {
public:
    InvalidArgument(std::string field, const std::string& what)
        : Error("InvalidArgument", field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& what) : Error("CapacityError", what) {}
};

class DegenerateDesign : public Error {
public:
    explicit DegenerateDesign(const std::string& what) : Error("DegenerateDesign", what) {}
};

class BetaOutOfRange : public Error {
public:
    enum class Side { AtOrBelowZero, AtOrAboveOne };

    BetaOutOfRange(double beta, Side side);
    double beta() const noexcept { return beta_; }
    Side side() const noexcept { return side_; }

private:
    double beta_;
    Side side_;
};

class NumericalBreakdown : public Error {
public:
    explicit NumericalBreakdown(const std::string& what) : Error("NumericalBreakdown", what) {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& what) : Error("ShapeMismatch", what) {}
};

class TooShort : public Error {
public:
    explicit TooShort(const std::string& what) : Error("TooShort", what) {}
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& what) : Error("InvalidConfig", what) {}
};

class EmptyResult : public Error {
public:
    explicit EmptyResult(const std::string& what) : Error("EmptyResult", what) {}
};

class IoError : public Error {
public:
    IoError(std::string path, const std::string& what)
        : Error("IoError", path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace oukit
