#pragma once

#include <stdexcept>
#include <string>

namespace lumidiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define LUMIDIFF_ERROR(Name)                     \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

LUMIDIFF_ERROR(IoError);
LUMIDIFF_ERROR(FormatError);
LUMIDIFF_ERROR(ShapeError);
LUMIDIFF_ERROR(ConfigError);
LUMIDIFF_ERROR(NumericError);
LUMIDIFF_ERROR(DataError);
LUMIDIFF_ERROR(IndexError);
LUMIDIFF_ERROR(BackendError);
LUMIDIFF_ERROR(LoadError);

#undef LUMIDIFF_ERROR

/// Raised when a training step produces a non-finite loss. Carries the
/// component breakdown so the caller can see which term blew up.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::string breakdown)
        : Error(what + " [" + breakdown + "]"), breakdown_(std::move(breakdown)) {}
    const std::string& breakdown() const noexcept { return breakdown_; }

private:
    std::string breakdown_;
};

}  // namespace lumidiff
