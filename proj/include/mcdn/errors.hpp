#pragma once

#include <stdexcept>
#include <string>

namespace mcdn {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// shape/dimension disagreement between tensors or volumes
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// invalid argument value (bad noise level, degenerate batch, ...)
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// file format / filesystem problems
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace mcdn
