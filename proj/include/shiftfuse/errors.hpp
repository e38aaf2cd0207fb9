#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace shiftfuse {

// Error taxonomy shared by the whole library. `kind()` is a stable
// machine-readable tag; the CLI forwards it in error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& m) : Error("schema", m) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error("parse", m) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& m) : Error("integrity", m) {}
};
struct SizeError : Error {
    explicit SizeError(const std::string& m) : Error("size", m) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error("usage", m) {}
};
struct SeparationError : Error {
    explicit SeparationError(const std::string& m) : Error("separation", m) {}
};
struct SingularityError : Error {
    explicit SingularityError(const std::string& m) : Error("singularity", m) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error("domain", m) {}
};
struct UnsupportedError : Error {
    explicit UnsupportedError(const std::string& m) : Error("unsupported", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace shiftfuse
