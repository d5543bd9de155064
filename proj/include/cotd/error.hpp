#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cotd {

// Two families: bad input (exit code 1 in the CLI) and I/O or endpoint
// failures (exit code 2).
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UncoverableCharacter : public ValidationError {
public:
  explicit UncoverableCharacter(std::size_t position)
      : ValidationError("no vocabulary entry covers the character at byte " +
                        std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

class InvalidVocabulary : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EmptySequence : public ValidationError {
public:
  EmptySequence() : ValidationError("cannot align an empty token sequence") {}
};

class TextMismatch : public ValidationError {
public:
  TextMismatch(std::string teacher_text, std::string student_text)
      : ValidationError("teacher and student sequences spell different texts"),
        teacher_text_(std::move(teacher_text)),
        student_text_(std::move(student_text)) {}
  const std::string& teacher_text() const noexcept { return teacher_text_; }
  const std::string& student_text() const noexcept { return student_text_; }

private:
  std::string teacher_text_;
  std::string student_text_;
};

class LengthMismatch : public ValidationError {
public:
  LengthMismatch(const std::string& what, std::size_t expected,
                 std::size_t actual)
      : ValidationError(what + ": expected length " + std::to_string(expected) +
                        ", got " + std::to_string(actual)) {}
};

class InvariantViolation : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class OutOfVocab : public ValidationError {
public:
  OutOfVocab(long id, std::size_t vocab_size)
      : ValidationError("token id " + std::to_string(id) +
                        " outside vocabulary of size " +
                        std::to_string(vocab_size)) {}
};

class InsufficientExemplars : public ValidationError {
public:
  InsufficientExemplars(std::size_t needed, std::size_t available)
      : ValidationError("need " + std::to_string(needed) +
                        " in-context exemplars, only " +
                        std::to_string(available) + " available") {}
};

class TooSmall : public ValidationError {
public:
  TooSmall(std::size_t size, std::size_t dev_size)
      : ValidationError("dataset of " + std::to_string(size) +
                        " items cannot hold a dev split of " +
                        std::to_string(dev_size)) {}
};

class UnknownDataset : public ValidationError {
public:
  explicit UnknownDataset(const std::string& name)
      : ValidationError("dataset '" + name + "' is not in the trace") {}
};

class EmptyRecord : public ValidationError {
public:
  EmptyRecord() : ValidationError("evaluation record is empty") {}
};

class EndpointError : public IoError {
public:
  EndpointError(int status, std::size_t sample_index, const std::string& detail)
      : IoError("teacher endpoint failed (status " + std::to_string(status) +
                ") at sample " + std::to_string(sample_index) +
                (detail.empty() ? "" : ": " + detail)),
        status_(status),
        sample_index_(sample_index) {}
  int status() const noexcept { return status_; }
  std::size_t sample_index() const noexcept { return sample_index_; }

private:
  int status_;
  std::size_t sample_index_;
};

}  // namespace cotd
