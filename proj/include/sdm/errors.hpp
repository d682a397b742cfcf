#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sdm {

// Error taxonomy shared by the library and the CLI. Every class carries a
// stable nonzero process exit code so batch drivers can dispatch on failures
// without parsing messages.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg, int exit_code)
        : std::runtime_error(kind + ": " + msg),
          kind_(std::move(kind)),
          exit_code_(exit_code) {}

    const std::string& kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return exit_code_; }

private:
    std::string kind_;
    int exit_code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("ConfigError", msg, 2) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("IoError", msg, 3) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("ParseError", msg, 4) {}
};
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("DimensionMismatch", msg, 5) {}
};
struct InvalidDictionary : Error {
    explicit InvalidDictionary(const std::string& msg) : Error("InvalidDictionary", msg, 6) {}
};
struct SchemaMismatch : Error {
    explicit SchemaMismatch(const std::string& msg) : Error("SchemaMismatch", msg, 7) {}
};
struct EmptyTrainingSet : Error {
    explicit EmptyTrainingSet(const std::string& msg) : Error("EmptyTrainingSet", msg, 8) {}
};
struct EmptyBatch : Error {
    explicit EmptyBatch(const std::string& msg) : Error("EmptyBatch", msg, 9) {}
};
struct DegenerateGeometry : Error {
    explicit DegenerateGeometry(const std::string& msg) : Error("DegenerateGeometry", msg, 10) {}
};
struct SingularSystem : Error {
    explicit SingularSystem(const std::string& msg) : Error("SingularSystem", msg, 11) {}
};
struct NotCentered : Error {
    explicit NotCentered(const std::string& msg) : Error("NotCentered", msg, 12) {}
};
struct InvalidPose : Error {
    explicit InvalidPose(const std::string& msg) : Error("InvalidPose", msg, 13) {}
};

}  // namespace sdm
