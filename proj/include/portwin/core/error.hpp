#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace portwin {

/// Base of every error raised by the library. `kind()` is a short stable
/// token used by the CLI when printing machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PORTWIN_DEFINE_ERROR(Name, token)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(token, what) {}         \
  }

PORTWIN_DEFINE_ERROR(ConfigError, "config");
PORTWIN_DEFINE_ERROR(CapacityError, "capacity");
PORTWIN_DEFINE_ERROR(RefinementError, "refinement");
PORTWIN_DEFINE_ERROR(LookupError, "lookup");
PORTWIN_DEFINE_ERROR(EncodingError, "encoding");
PORTWIN_DEFINE_ERROR(RangeError, "range");
PORTWIN_DEFINE_ERROR(SolverFailure, "solver");
PORTWIN_DEFINE_ERROR(ProtocolError, "protocol");
PORTWIN_DEFINE_ERROR(IntegrityError, "integrity");
PORTWIN_DEFINE_ERROR(ValidationError, "validation");
PORTWIN_DEFINE_ERROR(PackingInfeasible, "packing");
PORTWIN_DEFINE_ERROR(PreconditionError, "precondition");
PORTWIN_DEFINE_ERROR(IoError, "io");
PORTWIN_DEFINE_ERROR(RegistrationError, "registration");
PORTWIN_DEFINE_ERROR(PartitionError, "partition");
PORTWIN_DEFINE_ERROR(SteeringRejected, "steering");

#undef PORTWIN_DEFINE_ERROR

/// Raised when an expected halo/transfer message does not arrive.
class ExchangeFault : public Error {
 public:
  ExchangeFault(std::uint64_t source, std::uint64_t target, const std::string& what)
      : Error("exchange", what), source_(source), target_(target) {}
  std::uint64_t source() const noexcept { return source_; }
  std::uint64_t target() const noexcept { return target_; }

 private:
  std::uint64_t source_;
  std::uint64_t target_;
};

}  // namespace portwin
