#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

// Every failure raised by the library carries a short machine-readable
// category ("parse", "size", "shape", ...) next to the human message. The CLI
// prints both on a single line.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define VSEG_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  }

VSEG_DEFINE_ERROR(ParseError, "parse");
VSEG_DEFINE_ERROR(SizeError, "size");
VSEG_DEFINE_ERROR(IoError, "io");
VSEG_DEFINE_ERROR(ArgumentError, "argument");
VSEG_DEFINE_ERROR(IndexError, "index");
VSEG_DEFINE_ERROR(ShapeError, "shape");
VSEG_DEFINE_ERROR(StateError, "state");
VSEG_DEFINE_ERROR(AssemblyError, "assembly");
VSEG_DEFINE_ERROR(FusionError, "fusion");
VSEG_DEFINE_ERROR(MetricError, "metric");
VSEG_DEFINE_ERROR(ConsistencyError, "consistency");
VSEG_DEFINE_ERROR(ResumeError, "resume");
VSEG_DEFINE_ERROR(CompatibilityError, "compatibility");
VSEG_DEFINE_ERROR(DataError, "data");
VSEG_DEFINE_ERROR(TrainingError, "training");

#undef VSEG_DEFINE_ERROR

}  // namespace vseg
