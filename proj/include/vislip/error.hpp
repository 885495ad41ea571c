#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace vislip {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. Carries the offending 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A phoneme outside the configured inventory.
class InventoryError : public Error {
public:
    explicit InventoryError(const std::string& symbol)
        : Error("unknown phoneme '" + symbol + "'"), symbol_(symbol) {}
    const std::string& symbol() const noexcept { return symbol_; }

private:
    std::string symbol_;
};

/// A viseme map that is not a partition of its inventory.
class PartitionError : public Error {
public:
    using Error::Error;
};

/// Word missing from a pronunciation dictionary.
class OovError : public Error {
public:
    explicit OovError(const std::string& word)
        : Error("out-of-vocabulary word '" + word + "'"), word_(word) {}
    const std::string& word() const noexcept { return word_; }

private:
    std::string word_;
};

/// A file that cannot be opened; carries the path.
class FileError : public Error {
public:
    explicit FileError(const std::string& what, std::string path) : Error(what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// No complete path through a decoding or alignment graph.
class DecodeError : public Error {
public:
    using Error::Error;
};

class UndefinedError : public Error {
public:
    using Error::Error;
};

}  // namespace vislip
