#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neuronet {

// Root of every error raised by the library. The CLI maps ConfigError and
// friends to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(std::string where)
      : Error("non-finite value in " + where), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// EDF parsing

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class HeaderFieldError : public Error {
 public:
  explicit HeaderFieldError(std::string field)
      : Error("invalid EDF header field '" + field + "'"), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DegenerateCalibration : public Error {
 public:
  using Error::Error;
};

// Annotations / preprocessing

class CoverageGap : public Error {
 public:
  CoverageGap(double begin_sec, double end_sec)
      : Error("annotation gap between " + std::to_string(begin_sec) + " s and " +
              std::to_string(end_sec) + " s"),
        begin_(begin_sec),
        end_(end_sec) {}
  double begin_sec() const { return begin_; }
  double end_sec() const { return end_; }

 private:
  double begin_;
  double end_;
};

class UnknownStage : public Error {
 public:
  explicit UnknownStage(std::string token)
      : Error("unknown stage token '" + token + "'"), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

class UnsupportedRate : public Error {
 public:
  using Error::Error;
};

class DegenerateSignal : public Error {
 public:
  using Error::Error;
};

}  // namespace neuronet
