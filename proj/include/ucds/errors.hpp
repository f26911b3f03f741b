#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ucds {

// Base of every error the library throws on purpose. The category decides the
// process exit code in the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config: " + key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class DataErrc {
  io,
  empty_dataset,
  parse,
  insufficient_negatives,
  overlap,
  unknown_user,
  uncovered_user,
  split_inconsistent,
  digest_mismatch,
  checkpoint_version,
  checkpoint_checksum,
  checkpoint_kind,
  checkpoint_format,
};

class DataError : public Error {
 public:
  DataError(DataErrc code, const std::string& what) : Error(what), code_(code) {}
  DataErrc code() const { return code_; }

 private:
  DataErrc code_;
};

class ParseError : public DataError {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : DataError(DataErrc::parse,
                  file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InsufficientNegatives : public DataError {
 public:
  InsufficientNegatives(long long external_user, std::size_t pool,
                        std::size_t wanted)
      : DataError(DataErrc::insufficient_negatives,
                  "user " + std::to_string(external_user) + " has only " +
                      std::to_string(pool) + " non-interacted items, need " +
                      std::to_string(wanted)),
        user_(external_user) {}
  long long user() const { return user_; }

 private:
  long long user_;
};

// Non-finite loss or gradient during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ucds
