#pragma once

#include <stdexcept>
#include <string>

namespace detscore {

/// Base class for all errors raised by this library.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// File missing, unreadable or unwritable.
class io_error : public error {
public:
    explicit io_error(const std::string& what) : error(what) {}
};

/// Input file does not conform to the expected schema. Messages name the
/// offending field and record id where known.
class schema_error : public error {
public:
    explicit schema_error(const std::string& what) : error(what) {}
};

/// A value or call sequence violates a documented contract.
class validation_error : public error {
public:
    explicit validation_error(const std::string& what) : error(what) {}
};

} // namespace detscore
