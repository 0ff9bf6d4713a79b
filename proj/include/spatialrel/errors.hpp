#pragma once

#include <stdexcept>
#include <string>

namespace srel {

// Every domain failure carries a short machine-readable code used by the
// CLI (exit status) and the HTTP service (error bodies).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error("invalid_input", what) {}
};

class InvalidScene : public Error {
 public:
  explicit InvalidScene(const std::string& what) : Error("invalid_scene", what) {}
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& what) : Error("not_found", what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse_error", what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training_error", what) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error("generation_error", what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error("protocol_error", what) {}
};

class IncompleteSession : public Error {
 public:
  explicit IncompleteSession(const std::string& what)
      : Error("incomplete_session", what) {}
};

class SessionFinalized : public Error {
 public:
  explicit SessionFinalized(const std::string& what)
      : Error("session_finalized", what) {}
};

}  // namespace srel
