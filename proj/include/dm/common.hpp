#pragma once

#include <cstdint>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>

namespace dm {

// Error categories. Mirrored one-to-one by dm_status in the C API.
enum class Status : int {
  Ok = 0,
  InvalidArgument = 1,
  Validation = 2,
  Diverged = 3,
  Io = 4,
  Budget = 5,
  Numeric = 6,
  Internal = 7,
};

const char* status_name(Status s);

class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& msg)
      : std::runtime_error(msg), status_(status) {}
  Status status() const { return status_; }

 private:
  Status status_;
};

// Validation failures carry the offending config/field path ("reference.k_prime").
class ValidationError : public Error {
 public:
  ValidationError(std::string field_path, const std::string& msg)
      : Error(Status::Validation, field_path + ": " + msg),
        field_path_(std::move(field_path)) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

class DivergedError : public Error {
 public:
  DivergedError(int64_t step, const std::string& msg)
      : Error(Status::Diverged, msg), step_(step) {}
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

[[noreturn]] inline void fail(Status status, const std::string& msg) {
  throw Error(status, msg);
}

}  // namespace dm

// Requirement check with stream-style message:
//   DM_REQUIRE(n >= 1, InvalidArgument, "need n >= 1, got " << n);
#define DM_REQUIRE(cond, status, msg)                  \
  do {                                                 \
    if (!(cond)) {                                     \
      std::ostringstream dm_oss_;                      \
      dm_oss_ << msg;                                  \
      throw ::dm::Error(::dm::Status::status, dm_oss_.str()); \
    }                                                  \
  } while (0)
