#pragma once

#include <stdexcept>
#include <string>

namespace mgua {

// Error taxonomy used across the pipeline. Stage code catches by kind to
// attach stage-tagged diagnostics; tests assert on kind + message content.
enum class ErrorKind {
    Parse,       // malformed input document
    Validation,  // well-formed but violates the schema contract
    Geometry,    // degenerate or inverted element geometry
    Contract,    // API precondition violated
    Io,          // filesystem / serialization failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(ErrorKind::Parse, msg); }
[[noreturn]] inline void throw_validation(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }
[[noreturn]] inline void throw_geometry(const std::string& msg) { throw Error(ErrorKind::Geometry, msg); }
[[noreturn]] inline void throw_contract(const std::string& msg) { throw Error(ErrorKind::Contract, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

}  // namespace mgua
