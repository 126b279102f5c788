#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gridmtl {

/// Base class for all gridmtl errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON syntax, missing keys, wrong types).
class ParseError : public Error {
public:
    using Error::Error;
};

/// An invariant of a domain object is violated (bad grid data, bad dims).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Artifact produced under a different schema/layout than expected.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Bad run configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// FNV-1a 64-bit digest. Used for layout hashes, payload corruption
/// checks and determinism tests; not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

/// Digest of a whole file's bytes. Throws Error if the file cannot be read.
std::uint64_t fnv1a64_file(const std::string& path);

} // namespace gridmtl
