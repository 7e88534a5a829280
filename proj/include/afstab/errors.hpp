#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace afstab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AFSTAB_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(#Name ": " + what) {}        \
  }

AFSTAB_DEFINE_ERROR(ExcisedPoint);
AFSTAB_DEFINE_ERROR(OutOfDomain);
AFSTAB_DEFINE_ERROR(FitFailure);
AFSTAB_DEFINE_ERROR(SolverDiverged);
AFSTAB_DEFINE_ERROR(LeftDomain);
AFSTAB_DEFINE_ERROR(NoConvergence);
AFSTAB_DEFINE_ERROR(EmptySample);
AFSTAB_DEFINE_ERROR(NoCrossing);
AFSTAB_DEFINE_ERROR(MismatchedChart);
AFSTAB_DEFINE_ERROR(InvalidArgument);
AFSTAB_DEFINE_ERROR(ParseError);

#undef AFSTAB_DEFINE_ERROR

/// Every violated constraint of a configuration, each as "field.path: message".
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error("ValidationError: " + join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
  std::vector<std::string> violations_;
};

}  // namespace afstab
