#pragma once

#include <stdexcept>
#include <string>

namespace gradepreview {

/// Base class for every error raised by the library.
class GradeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class FrameTagError : public GradeError {
    using GradeError::GradeError;
};
class PathError : public GradeError {
    using GradeError::GradeError;
};
class StreamError : public GradeError {
    using GradeError::GradeError;
};
class TransformError : public GradeError {
    using GradeError::GradeError;
};
class DegenerateGeometryError : public GradeError {
    using GradeError::GradeError;
};
class FitError : public GradeError {
    using GradeError::GradeError;
};
class NumericalError : public GradeError {
    using GradeError::GradeError;
};
class CheckpointError : public GradeError {
    using GradeError::GradeError;
};
class InsufficientDataError : public GradeError {
    using GradeError::GradeError;
};
class AlignmentError : public GradeError {
    using GradeError::GradeError;
};
class ScenarioError : public GradeError {
    using GradeError::GradeError;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public GradeError {
  public:
    ConfigError(std::string field, const std::string& what)
        : GradeError(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

  private:
    std::string field_;
};

/// File could not be read or parsed. Carries the file name and, when known, the line.
class IoError : public GradeError {
  public:
    IoError(std::string file, long line, const std::string& what)
        : GradeError(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
          file_(std::move(file)), line_(line) {}
    const std::string& file() const noexcept { return file_; }
    long line() const noexcept { return line_; }

  private:
    std::string file_;
    long line_;
};

} // namespace gradepreview
