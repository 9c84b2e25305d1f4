#pragma once

#include <stdexcept>
#include <string>

namespace mmr {

// Base class for every failure raised by the library. `module()` names the
// subsystem that raised it so the CLI can print module-qualified messages.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DesignError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

// Segment whose variance is too small to normalize.
class DegenerateSegment : public Error {
public:
    using Error::Error;
};

// Schema violation in a user supplied document. `path()` is the JSON path of
// the offending field, e.g. "train.base_lr".
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& what)
        : Error("config", path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace mmr
